use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use carbonledger::domain::{EmissionFactorSet, SourceKind};
use carbonledger::emission::{scenario_compare, total_emissions};
use carbonledger::ingest::{Dataset, ScenarioConfig};
use carbonledger::nowcast::{nowcast, GrowthProjection, NowcastOptions};
use carbonledger::output::{
    format_growth, write_comparison_csv, write_contributions_csv, write_emissions_csv,
    write_projection_csv, write_uncertainty_csv, TOTAL,
};
use carbonledger::uncertainty::{
    contribution_decomposition, monte_carlo_band, UncertaintySpec, MIN_BAND_DRAWS,
};
use carbonledger::Error;

use crate::files::{load_config, load_dataset, write_atomic};
use crate::manifest::RunManifest;
use crate::table::Table;
use crate::{CompareArgs, ComputeArgs, Format, ProjectArgs, UncertaintyArgs, VerifyArgs};

/// A command-line misuse that parsing alone cannot catch.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(Error::UnknownScenario(_)) = cause.downcast_ref::<Error>() {
            return 2;
        }
    }
    1
}

/// One diagnostic per line; located ingest errors are listed individually.
pub fn print_error(e: &anyhow::Error) {
    let mut context = Vec::new();
    for cause in e.chain() {
        match cause.downcast_ref::<Error>() {
            Some(Error::Ingest(list)) => {
                eprintln!("error: {} problem(s) in input", list.len());
                for item in list {
                    eprintln!("  {item}");
                }
                return;
            }
            Some(Error::MissingData(list)) if list.len() > 1 => {
                eprintln!("error: missing data");
                for item in list {
                    eprintln!("  {item}");
                }
                return;
            }
            _ => context.push(cause.to_string()),
        }
    }
    eprintln!("error: {}", context.join(": "));
}

fn pick_scenario(cfg: &ScenarioConfig, name: Option<&str>) -> Result<EmissionFactorSet> {
    Ok(match name {
        Some(n) => cfg.scenario(n)?,
        None => cfg.default()?,
    })
}

fn annual_years(ds: &Dataset) -> BTreeSet<i32> {
    ds.sources()
        .into_iter()
        .flat_map(|s| ds.annual_years(s))
        .collect()
}

fn year_range(ds: &Dataset, from: Option<i32>, to: Option<i32>) -> Result<(i32, i32)> {
    let years = annual_years(ds);
    let lo = from.or_else(|| years.first().copied());
    let hi = to.or_else(|| years.last().copied());
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo <= hi => Ok((lo, hi)),
        (Some(lo), Some(hi)) => Err(Usage(format!("--from {lo} is after --to {hi}")).into()),
        _ => Err(anyhow!("no annual flow records in the input")),
    }
}

fn spec_with(cfg: &ScenarioConfig, draws: Option<usize>, seed: Option<u64>) -> UncertaintySpec {
    let mut spec = cfg.uncertainty.clone();
    if let Some(d) = draws {
        spec.draws = d;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec
}

fn finish(manifest: &mut RunManifest, outputs: &[(&Path, Vec<u8>)]) -> Result<()> {
    for (path, bytes) in outputs {
        write_atomic(path, bytes)?;
        manifest.output(path)?;
    }
    manifest.write_beside(outputs[0].0)?;
    Ok(())
}

pub fn compute(a: ComputeArgs) -> Result<()> {
    let mut m = RunManifest::new("compute");
    let cfg = load_config(a.data.config.as_deref(), &mut m)?;
    let scenario = pick_scenario(&cfg, a.scenario.as_deref())?;
    let ds = load_dataset(&a.data.inputs(), &mut m)?;
    let (from, to) = year_range(&ds, a.from, a.to)?;
    let mut estimates = total_emissions(&ds, &scenario, from..=to)?;
    if let Some(draws) = a.draws {
        let spec = spec_with(&cfg, Some(draws), a.seed);
        for e in &mut estimates {
            let band = monte_carlo_band(&ds, &scenario, e.year, &spec)?.band()?;
            e.band = Some((band.lo68, band.hi68));
        }
        m.seed = Some(spec.seed);
    }
    let mut csv = Vec::new();
    write_emissions_csv(&estimates, &mut csv)?;
    m.scenario = Some(scenario.scenario_name.clone());
    finish(&mut m, &[(&a.out, csv)])
}

fn latest_monthly_year(ds: &Dataset) -> Option<i32> {
    ds.records()
        .filter(|r| r.period.month.is_some())
        .map(|r| r.period.year)
        .max()
}

fn basis_label(n: u8) -> String {
    format!("first {n} months")
}

/// Sources as rows, one column per basis.
fn projection_table(projections: &[GrowthProjection]) -> Table {
    let mut header = vec!["source".to_string()];
    header.extend(projections.iter().map(|p| basis_label(p.basis_months)));
    let year = projections.first().map_or(0, |p| p.year);
    let mut t = Table::new(header).titled(format!("Projected emission growth, {year}"));
    let sources: BTreeSet<SourceKind> = projections
        .iter()
        .flat_map(|p| p.per_source.keys().copied())
        .collect();
    for s in sources {
        let mut row = vec![s.to_string()];
        row.extend(
            projections
                .iter()
                .map(|p| p.per_source.get(&s).map(format_growth).unwrap_or_default()),
        );
        t.push(row);
    }
    let mut total = vec![TOTAL.to_string()];
    total.extend(projections.iter().map(|p| format_growth(&p.total)));
    t.push(total);
    t
}

pub fn project(a: ProjectArgs) -> Result<()> {
    let mut m = RunManifest::new("project");
    let cfg = load_config(a.data.config.as_deref(), &mut m)?;
    let scenario = pick_scenario(&cfg, a.scenario.as_deref())?;
    let ds = load_dataset(&a.data.inputs(), &mut m)?;
    let year = match a.year {
        Some(y) => y,
        None => latest_monthly_year(&ds)
            .ok_or_else(|| anyhow!("no monthly flow records; pass --monthly or --year"))?,
    };
    let defaults = NowcastOptions::default();
    let opts = NowcastOptions {
        level: a.level,
        pooled: a.pooled,
        history_from: a.history_from.unwrap_or(defaults.history_from),
        stock_from: a.stock_from.unwrap_or(defaults.stock_from),
    };
    let spec = spec_with(&cfg, a.draws, a.seed);
    let mut projections = Vec::new();
    for n in &a.months {
        let (g, details) = nowcast(&ds, &scenario, year, *n, &opts, &spec)
            .with_context(|| format!("projecting {year} from {}", basis_label(*n)))?;
        for d in &details {
            for f in &d.flows {
                if let Some(model) = &f.model {
                    log::info!(
                        "{} {} n={n}: slope {:.4}, intercept {:.4}, se {:.4}, r2 {:.3} over {} years",
                        d.source,
                        f.flow,
                        model.slope,
                        model.intercept,
                        model.residual_se,
                        model.r2,
                        model.n
                    );
                }
            }
        }
        projections.push(g);
    }
    let bytes = match a.format {
        Format::Csv => {
            let mut csv = Vec::new();
            write_projection_csv(&projections, &mut csv)?;
            csv
        }
        Format::Text => projection_table(&projections).to_text().into_bytes(),
    };
    m.scenario = Some(scenario.scenario_name.clone());
    m.seed = Some(spec.seed);
    finish(&mut m, &[(&a.out, bytes)])
}

fn contributions_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.contributions.csv"))
}

pub fn uncertainty(a: UncertaintyArgs) -> Result<()> {
    let mut m = RunManifest::new("uncertainty");
    let cfg = load_config(a.data.config.as_deref(), &mut m)?;
    let scenario = pick_scenario(&cfg, a.scenario.as_deref())?;
    let spec = spec_with(&cfg, a.draws, a.seed);
    if spec.draws < MIN_BAND_DRAWS {
        return Err(Usage(format!(
            "--draws {} is too small: a band needs at least {MIN_BAND_DRAWS} draws",
            spec.draws
        ))
        .into());
    }
    let ds = load_dataset(&a.data.inputs(), &mut m)?;
    let year = match a.year {
        Some(y) => y,
        None => *annual_years(&ds)
            .last()
            .ok_or_else(|| anyhow!("no annual flow records in the input"))?,
    };
    let result = monte_carlo_band(&ds, &scenario, year, &spec)?;
    let mut band_csv = Vec::new();
    write_uncertainty_csv(std::slice::from_ref(&result), &mut band_csv)?;
    m.scenario = Some(scenario.scenario_name.clone());
    m.seed = Some(spec.seed);

    let contributions_out = a
        .contributions
        .unwrap_or_else(|| contributions_path(&a.out));
    match contribution_decomposition(&ds, &scenario, year, &spec) {
        Ok(c) => {
            let mut c_csv = Vec::new();
            write_contributions_csv(&c, &mut c_csv)?;
            finish(&mut m, &[(&a.out, band_csv), (&contributions_out, c_csv)])
        }
        Err(e) => {
            finish(&mut m, &[(&a.out, band_csv)])?;
            Err(anyhow::Error::new(e).context(format!(
                "band written to {}, but contributions could not be computed",
                a.out.display()
            )))
        }
    }
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let mut names: Vec<&str> = Vec::new();
    for s in &a.scenarios {
        if !names.contains(&s.as_str()) {
            names.push(s);
        }
    }
    if names.len() < 2 {
        return Err(Usage(format!(
            "--scenarios needs at least 2 distinct scenarios, got {}",
            names.len()
        ))
        .into());
    }
    let mut m = RunManifest::new("compare");
    let cfg = load_config(a.data.config.as_deref(), &mut m)?;
    let scenarios = names
        .iter()
        .map(|n| cfg.scenario(n))
        .collect::<carbonledger::Result<Vec<_>>>()?;
    let reference = a.reference.as_deref().unwrap_or(names[0]);
    let ds = load_dataset(&a.data.inputs(), &mut m)?;
    let (from, to) = year_range(&ds, a.from, a.to)?;
    let cmp = scenario_compare(&ds, &scenarios, from..=to, reference)?;
    for (name, e) in &cmp.failures {
        log::warn!("scenario '{name}' failed: {e}");
        eprintln!("warning: scenario '{name}' skipped: {e}");
    }
    if cmp.rows.is_empty() {
        return Err(anyhow!("every scenario failed"));
    }
    let mut csv = Vec::new();
    write_comparison_csv(&cmp, &mut csv)?;
    m.scenario = Some(names.join(","));
    finish(&mut m, &[(&a.out, csv)])
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    let manifest = RunManifest::read(&a.manifest)?;
    manifest.verify()?;
    println!(
        "ok: {} input(s), {} output(s) match",
        manifest.inputs.len(),
        manifest.outputs.len()
    );
    Ok(())
}
