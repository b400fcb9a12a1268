//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.
//!
//! Golden files for the end-to-end criterion live in `tests/golden/`.
//! Regenerate them with `CARBONLEDGER_BLESS=1 cargo test --test acceptance`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use carbonledger::balance::apparent_consumption;
use carbonledger::domain::{
    EmissionFactorSet, FlowRecord, HeatingValueSeries, Period, Quantity, SourceKind, Unit,
};
use carbonledger::emission::{total_emissions, EmissionEstimate};
use carbonledger::exec::Execution;
use carbonledger::ingest::{parse_scenario_config, preset, Dataset, ScenarioConfig};
use carbonledger::nowcast::{
    combine_total_growth, fit_partial_year_model, project_full_year, Projection, DEFAULT_LEVEL,
};
use carbonledger::output::format_growth;
use carbonledger::uncertainty::{
    contribution_decomposition_with, monte_carlo_band_with, InputKind, UncertaintySpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn coal_year(year: i32, values: [f64; 5]) -> FlowRecord {
    FlowRecord::from_native(Period::annual(year), SourceKind::Coal, values).unwrap()
}

fn coal_co2(
    ds: &Dataset,
    scenario: &EmissionFactorSet,
    years: std::ops::RangeInclusive<i32>,
) -> Vec<f64> {
    total_emissions(ds, scenario, years)
        .unwrap()
        .iter()
        .map(|e| e.per_source[&SourceKind::Coal].magnitude())
        .collect()
}

// Factors for non-coal sources; illustrative, shared by every scenario.
const CONFIG: &str = r#"
[common]
heating_value.oil = 42.62
carbon_content.oil = 20.08
oxidation.oil = 0.98
heating_value.gas = 0.03893
carbon_content.gas = 15.32
oxidation.gas = 0.99
cement_factor = 0.1083
"#;

fn config() -> ScenarioConfig {
    parse_scenario_config(CONFIG.as_bytes()).unwrap()
}

/// Random multi-source dataset over `years`, all flows positive.
fn random_dataset(rng: &mut ChaCha8Rng, years: std::ops::RangeInclusive<i32>) -> Dataset {
    let mut ds = Dataset::new();
    for y in years {
        let p = Period::annual(y);
        let coal = rng.random_range(1e8..5e9);
        ds.insert(coal_year(
            y,
            [
                coal,
                rng.random_range(0.0..3e8),
                rng.random_range(0.0..1e8),
                rng.random_range(-5e7..5e7),
                rng.random_range(0.0..1e8),
            ],
        ));
        let oil = rng.random_range(1e8..3e8);
        ds.insert(
            FlowRecord::from_native(p, SourceKind::Oil, [oil, oil * 0.8, oil * 0.1, 1e6, 2e7])
                .unwrap(),
        );
        let gas = rng.random_range(5e10..2e11);
        ds.insert(
            FlowRecord::from_native(p, SourceKind::NaturalGas, [gas, gas / 2.0, 3e9, 0.0, 5e9])
                .unwrap(),
        );
        ds.insert(FlowRecord::cement(p, rng.random_range(5e8..2.5e9)).unwrap());
    }
    ds
}

fn criterion_1() -> Outcome {
    let ds = Dataset::from_records([coal_year(2018, [1e6, 0.0, 0.0, 0.0, 0.0])]);
    let got = coal_co2(&ds, &preset("this-study").unwrap(), 2018..=2018)[0] / 1e6;
    // Hand chain: t -> TJ -> tC -> tCO2.
    let oracle = 1e6 * 20.95 / 1000.0 * 26.59 * 0.92 * 44.0 / 12.0 / 1e6;
    let anchor = 1.8792;
    check(
        rel(got, anchor) < 1e-3 && rel(got, oracle) < 1e-12,
        format!("{got:.6} MtCO2 (anchor {anchor}, oracle {oracle:.6})"),
    )
}

fn ratio_law(other: &str, expected: f64) -> Outcome {
    let cfg = config();
    let base = cfg.scenario("this-study").unwrap();
    let alt = cfg.scenario(other).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let ds = random_dataset(&mut rng, 2000..=2018);
        let a = total_emissions(&ds, &base, 2000..=2018).unwrap();
        let b = total_emissions(&ds, &alt, 2000..=2018).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let r = y.per_source[&SourceKind::Coal].magnitude()
                / x.per_source[&SourceKind::Coal].magnitude();
            worst = worst.max(rel(r, expected));
            for s in [SourceKind::Oil, SourceKind::NaturalGas, SourceKind::Cement] {
                if x.per_source[&s] != y.per_source[&s] {
                    return Err(format!("{s} changed between scenarios"));
                }
            }
        }
    }
    check(
        worst < 1e-12,
        format!("coal ratio {other}/this-study = {expected:.9}, worst relative error {worst:.2e} over 380 years"),
    )
}

fn criterion_2() -> Outcome {
    ratio_law("BP", 1.0 / 0.92)
}

fn criterion_3() -> Outcome {
    ratio_law("UN-HV", 21.4 / 20.95)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let hv = HeatingValueSeries::coal_default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    for i in 0..n {
        let f: [f64; 5] = [
            rng.random_range(0.0..5e9),
            rng.random_range(0.0..5e8),
            rng.random_range(0.0..5e8),
            rng.random_range(-1e8..1e8),
            rng.random_range(0.0..2e8),
        ];
        let ac = |v: [f64; 5]| {
            apparent_consumption(&coal_year(2017, v), &hv)
                .unwrap()
                .native
                .magnitude()
        };
        let scale = f.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        let tol = 1e-12 * scale * 8.0;
        let base = ac(f);

        let d = rng.random_range(0.0..5e8);
        let shifted = ac([f[0], f[1] + d, f[2] + d, f[3], f[4]]);
        if (shifted - base).abs() > tol + 1e-12 * d * 4.0 {
            return Err(format!(
                "record {i}: trade shift {d} moved {base} to {shifted}"
            ));
        }
        let no_stock = ac([f[0], f[1], f[2], 0.0, f[4]]);
        let neg = ac([f[0], f[1], f[2], -f[3], f[4]]);
        if ((base - no_stock) + (neg - no_stock)).abs() > tol {
            return Err(format!("record {i}: stock change not antisymmetric"));
        }
        let k = rng.random_range(0.01..100.0);
        let scaled = ac(f.map(|x| x * k));
        if (scaled - k * base).abs() > tol * k {
            return Err(format!("record {i}: not linear under scale {k}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        secs < 10.0,
        format!("trade shift, stock antisymmetry, linearity on {n} records in {secs:.2} s"),
    )
}

fn coal_dataset() -> Dataset {
    Dataset::from_records([coal_year(2017, [3.5e9, 2.7e8, 8e6, 2.5e7, 1e8])])
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let ds = coal_dataset();
    let f = preset("this-study").unwrap();
    let single = UncertaintySpec::none()
        .with_sigma(InputKind::CarbonContent, SourceKind::Coal, 0.074)
        .unwrap()
        .with_draws(100_000, 42);
    let two = UncertaintySpec::none()
        .with_sigma(InputKind::CarbonContent, SourceKind::Coal, 0.05)
        .unwrap()
        .with_sigma(InputKind::Oxidation, SourceKind::Coal, 0.05)
        .unwrap()
        .with_draws(100_000, 42);
    let run =
        |exec, spec: &UncertaintySpec| monte_carlo_band_with(exec, &ds, &f, 2017, spec).unwrap();

    let h1 = 100.0
        * run(Execution::Parallel, &single)
            .relative_half_width()
            .unwrap();
    let h2 = 100.0
        * run(Execution::Parallel, &two)
            .relative_half_width()
            .unwrap();
    let quadrature = 100.0 * (0.05f64.powi(2) * 2.0).sqrt();

    let reference = run(Execution::Sequential, &two);
    let bits = |r: &carbonledger::uncertainty::UncertaintyResult| {
        let b = r.band.unwrap();
        [
            r.central.magnitude(),
            b.lo68.magnitude(),
            b.hi68.magnitude(),
        ]
        .map(f64::to_bits)
    };
    let mut identical = bits(&run(Execution::Sequential, &two)) == bits(&reference);
    for threads in [1, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let r = pool.install(|| run(Execution::Parallel, &two));
        identical &= bits(&r) == bits(&reference);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        (h1 - 7.4).abs() <= 0.3 && (h2 - quadrature).abs() <= 0.3 && identical && secs < 30.0,
        format!(
            "half-band {h1:.3}% (target 7.4), two inputs {h2:.3}% (oracle {quadrature:.3}), \
             bit-identical across sequential/1/4 threads: {identical}, {secs:.1} s"
        ),
    )
}

fn criterion_6() -> Outcome {
    let ds = coal_dataset();
    let f = preset("this-study").unwrap();
    let exec = Execution::default();

    let one = UncertaintySpec::none()
        .with_sigma(InputKind::Oxidation, SourceKind::Coal, 0.05)
        .unwrap()
        .with_draws(10_000, 7);
    let c1 = contribution_decomposition_with(exec, &ds, &f, 2017, &one).unwrap();

    let sym = UncertaintySpec::none()
        .with_sigma(InputKind::CarbonContent, SourceKind::Coal, 0.05)
        .unwrap()
        .with_sigma(InputKind::Oxidation, SourceKind::Coal, 0.05)
        .unwrap()
        .with_draws(100_000, 7);
    let c2 = contribution_decomposition_with(exec, &ds, &f, 2017, &sym).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let many = random_dataset(&mut rng, 2016..=2017);
    let mut spec = UncertaintySpec::default().with_draws(5_000, 7);
    spec.set_sigma(InputKind::CementFactor, SourceKind::Cement, 0.05)
        .unwrap();
    spec.set_sigma(InputKind::StatisticalError, SourceKind::Coal, 0.02)
        .unwrap();
    let c3 = contribution_decomposition_with(
        exec,
        &many,
        &config().scenario("this-study").unwrap(),
        2017,
        &spec,
    )
    .unwrap();
    let sum: f64 = c3.iter().map(|c| c.share_pct).sum();
    let sorted = c3.windows(2).all(|w| w[0].share_pct >= w[1].share_pct);

    let single_ok = c1.len() == 1 && (c1[0].share_pct - 100.0).abs() < 1e-9;
    let split_ok = c2.len() == 2 && c2.iter().all(|c| (c.share_pct - 50.0).abs() <= 1.0);
    check(
        single_ok && split_ok && (sum - 100.0).abs() <= 0.1 && sorted,
        format!(
            "single input {:.3}%, symmetric pair {:.3}/{:.3}%, {} inputs sum to {sum:.6}% (descending: {sorted})",
            c1.first().map_or(f64::NAN, |c| c.share_pct),
            c2[0].share_pct,
            c2.get(1).map_or(f64::NAN, |c| c.share_pct),
            c3.len()
        ),
    )
}

fn closed_form(pairs: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let (sx, sy) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let sse: f64 = pairs
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, (sse / (n - 2.0)).sqrt())
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x_dist = Normal::new(5.0, 4.0).unwrap();
    let trials = 4_000;
    let n = 27;
    let mut covered = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let slope = rng.random_range(0.5..1.5);
        let intercept = rng.random_range(-2.0..2.0);
        let noise = Normal::new(0.0, rng.random_range(0.5..3.0)).unwrap();
        let draw = |rng: &mut ChaCha8Rng| {
            let x = x_dist.sample(rng);
            (x, intercept + slope * x + noise.sample(rng))
        };
        let pairs: Vec<(f64, f64)> = (0..n).map(|_| draw(&mut rng)).collect();
        let model = fit_partial_year_model(&pairs).unwrap();
        let (b, a, se) = closed_form(&pairs);
        worst = worst
            .max(rel(model.slope, b))
            .max(rel(model.intercept, a))
            .max(rel(model.residual_se, se));
        let (x0, y0) = draw(&mut rng);
        let p = project_full_year(&model, x0, DEFAULT_LEVEL).unwrap();
        if p.lo <= y0 && y0 <= p.hi {
            covered += 1;
        }
    }
    let coverage = 100.0 * covered as f64 / trials as f64;
    let secs = start.elapsed().as_secs_f64();
    check(
        (coverage - 68.0).abs() <= 4.0 && worst < 1e-10 && secs < 60.0,
        format!(
            "coverage {coverage:.2}% over {trials} panels of n={n}, OLS worst relative error {worst:.1e}, {secs:.1} s"
        ),
    )
}

fn prior_estimate(shares: [(SourceKind, f64); 4]) -> EmissionEstimate {
    let per_source: BTreeMap<SourceKind, Quantity> = shares
        .iter()
        .map(|(s, w)| (*s, Quantity::new(w * 1e10, Unit::TonneCo2).unwrap()))
        .collect();
    let total = per_source.values().map(|q| q.magnitude()).sum();
    EmissionEstimate {
        year: 2017,
        scenario_name: "synthetic".into(),
        per_source,
        energy: BTreeMap::new(),
        total: Quantity::new(total, Unit::TonneCo2).unwrap(),
        band: None,
    }
}

fn criterion_8() -> Outcome {
    use SourceKind::*;
    // Component growths and one-sigma ranges, ten-month basis.
    let components: BTreeMap<SourceKind, Projection> = [
        (
            Coal,
            Projection {
                central: 4.8,
                lo: 1.8,
                hi: 7.8,
            },
        ),
        (
            Oil,
            Projection {
                central: 5.6,
                lo: 1.3,
                hi: 9.9,
            },
        ),
        (
            NaturalGas,
            Projection {
                central: 17.4,
                lo: 14.2,
                hi: 20.6,
            },
        ),
        (
            Cement,
            Projection {
                central: 2.6,
                lo: 1.4,
                hi: 3.8,
            },
        ),
    ]
    .into();
    let spec = UncertaintySpec::none().with_draws(100_000, 8);

    let arbitrary = [
        (Coal, 0.72),
        (Oil, 0.14),
        (NaturalGas, 0.05),
        (Cement, 0.09),
    ];
    let mean = combine_total_growth(
        &components,
        &prior_estimate(arbitrary),
        &spec,
        DEFAULT_LEVEL,
    )
    .unwrap()
    .central;
    let hand = 0.72 * 4.8 + 0.14 * 5.6 + 0.05 * 17.4 + 0.09 * 2.6;

    // 4.8a + 5.6(0.16) + 17.4(0.06) + 2.6(0.78 - a) = 5.5
    let a = (5.5 - 5.6 * 0.16 - 17.4 * 0.06 - 2.6 * 0.78) / (4.8 - 2.6);
    let calibrated = [
        (Coal, a),
        (Oil, 0.16),
        (NaturalGas, 0.06),
        (Cement, 0.78 - a),
    ];
    let total = combine_total_growth(
        &components,
        &prior_estimate(calibrated),
        &spec,
        DEFAULT_LEVEL,
    )
    .unwrap();
    let oracle = calibrated
        .iter()
        .map(|(s, w)| (w * components[s].half_width()).powi(2))
        .sum::<f64>()
        .sqrt();
    let row = format_growth(&total);
    check(
        rel(mean, hand) < 1e-12
            && (total.central - 5.5).abs() < 1e-9
            && row.starts_with("+5.5% (")
            && (total.half_width() - oracle).abs() <= 0.5,
        format!(
            "weighted mean {mean:.6} vs hand {hand:.6}; calibrated total {row}, half-width {:.3} vs quadrature {oracle:.3}",
            total.half_width()
        ),
    )
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_carbonledger"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1546300800")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

const GOLDEN: [&str; 4] = [
    "emissions.csv",
    "projection_10.csv",
    "projection_9.csv",
    "projection.txt",
];

fn end_to_end(dir: &Path) -> Result<(), String> {
    let data = workspace().join("data/synthetic");
    let p = |name: &str| data.join(name).to_string_lossy().into_owned();
    let o = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let (flows, monthly, config) = (p("flows.csv"), p("monthly.csv"), p("config.toml"));
    let common = ["--flows", &flows, "--config", &config];
    let with_monthly = [
        "--flows",
        &flows,
        "--monthly",
        &monthly,
        "--config",
        &config,
    ];
    run_cli(&[&["compute"][..], &common, &["--out", &o("emissions.csv")]].concat())?;
    for (months, name) in [("10", "projection_10.csv"), ("9", "projection_9.csv")] {
        run_cli(
            &[
                &["project"][..],
                &with_monthly,
                &["--months", months, "--out", &o(name)],
            ]
            .concat(),
        )?;
    }
    run_cli(
        &[
            &["project"][..],
            &with_monthly,
            &[
                "--months",
                "9,10",
                "--format",
                "text",
                "--out",
                &o("projection.txt"),
            ],
        ]
        .concat(),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    end_to_end(first.path())?;
    end_to_end(second.path())?;

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    if std::env::var_os("CARBONLEDGER_BLESS").is_some() {
        std::fs::create_dir_all(&golden).unwrap();
        for name in GOLDEN {
            std::fs::copy(first.path().join(name), golden.join(name)).unwrap();
        }
    }
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    for name in GOLDEN {
        let a = read(first.path().join(name))?;
        if a != read(second.path().join(name))? {
            return Err(format!("{name} differs between runs"));
        }
        if a != read(golden.join(name))? {
            return Err(format!("{name} differs from tests/golden/{name}"));
        }
    }

    let csv10 = String::from_utf8(read(first.path().join("projection_10.csv"))?).unwrap();
    let csv9 = String::from_utf8(read(first.path().join("projection_9.csv"))?).unwrap();
    let text = String::from_utf8(read(first.path().join("projection.txt"))?).unwrap();
    let header = "source,basis_months,growth_central_pct,lo68_pct,hi68_pct";
    let total = text.lines().find(|l| l.starts_with("total")).unwrap_or("");
    let shaped = csv10.starts_with(header)
        && csv9.starts_with(header)
        && csv10.lines().any(|l| l.starts_with("total,10,"))
        && csv9.lines().any(|l| l.starts_with("total,9,"))
        && text.contains("first 9 months")
        && text.contains("first 10 months")
        && total.matches("% (").count() == 2;
    let secs = start.elapsed().as_secs_f64();
    check(
        shaped && secs < 60.0,
        format!("compute + project (10, 9 months) match golden files byte for byte; total row: {}; {secs:.1} s", total.trim()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("coal unit chain", criterion_1),
        ("oxidation scenario law", criterion_2),
        ("heating-value scenario law", criterion_3),
        ("apparent consumption properties", criterion_4),
        ("Monte Carlo band and determinism", criterion_5),
        ("contribution decomposition", criterion_6),
        ("prediction-interval calibration", criterion_7),
        ("combination identity", criterion_8),
        ("end-to-end consistency dataset", criterion_9),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match &outcome {
            Ok(detail) => format!("criterion {}: PASS  {name}: {detail}\n", i + 1),
            Err(detail) => format!("criterion {}: FAIL  {name}: {detail}\n", i + 1),
        };
        std::io::Write::write_all(&mut std::io::stderr(), line.as_bytes()).unwrap();
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
