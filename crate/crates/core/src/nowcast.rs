//! Partial-year nowcasting.
//!
//! For each fuel and flow (production, import, export) a linear model maps
//! the year-on-year growth of the first `n` months to the full-year growth,
//! fitted over a historical panel. The target year's flows are projected
//! from their partial-year growth, passed through the mass balance, and
//! turned into an emission growth rate with a 68% interval. Per-source
//! rates are then combined, weighted by prior-year emission shares.
//!
//! Assumptions for the projected year: stock change and non-energy use
//! persist at prior-year levels; stock change carries an absolute one-σ
//! equal to the standard deviation of the annual stock-change history.

use std::collections::BTreeMap;
use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::balance::growth_pct;
use crate::domain::{EmissionFactorSet, FlowRecord, Period, SourceKind};
use crate::emission::{total_emissions, EmissionEstimate};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::ingest::{cumulative_months, Dataset};
use crate::uncertainty::{
    draw_rng, percentile, stock_change_sigma, stock_history, truncated_normal, UncertaintySpec,
    LOWER_PERCENTILE, UPPER_PERCENTILE,
};

pub const DEFAULT_LEVEL: f64 = 0.68;
pub const DEFAULT_BASIS: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowKind {
    Production,
    Import,
    Export,
}

impl FlowKind {
    pub const ALL: [FlowKind; 3] = [Self::Production, Self::Import, Self::Export];

    fn of(&self, r: &FlowRecord) -> f64 {
        match self {
            Self::Production => r.production.magnitude(),
            Self::Import => r.import.magnitude(),
            Self::Export => r.export.magnitude(),
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Production => "production",
            Self::Import => "import",
            Self::Export => "export",
        })
    }
}

/// OLS fit of full-year growth on partial-year growth (both percent).
#[derive(Debug, Clone, PartialEq)]
pub struct PartialYearModel {
    /// `None` for a model pooled across fuels.
    pub source: Option<SourceKind>,
    pub flow: FlowKind,
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub residual_se: f64,
    pub r2: f64,
    pub mean_x: f64,
    pub sxx: f64,
}

impl PartialYearModel {
    pub fn labelled(mut self, source: Option<SourceKind>, flow: FlowKind) -> Self {
        self.source = source;
        self.flow = flow;
        self
    }
}

/// Fits `g_full = intercept + slope · g_first_n` by ordinary least squares.
pub fn fit_partial_year_model(pairs: &[(f64, f64)]) -> Result<PartialYearModel> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let nf = n as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateRegression);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = pairs
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PartialYearModel {
        source: None,
        flow: FlowKind::Production,
        n,
        slope,
        intercept,
        residual_se: (sse / (nf - 2.0)).sqrt(),
        r2,
        mean_x,
        sxx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub central: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Projection {
    pub fn point(v: f64) -> Self {
        Self {
            central: v,
            lo: v,
            hi: v,
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }
}

/// Two-sided standard-normal quantile for a central interval at `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    Ok(Normal::standard().inverse_cdf((1.0 + level) / 2.0))
}

fn student_quantile(level: f64, dof: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(t.inverse_cdf((1.0 + level) / 2.0))
}

/// Full-year growth with a Student-t prediction interval (n − 2 dof).
pub fn project_full_year(
    model: &PartialYearModel,
    g_first_n: f64,
    level: f64,
) -> Result<Projection> {
    let t = student_quantile(level, model.n as f64 - 2.0)?;
    let central = model.intercept + model.slope * g_first_n;
    let leverage = 1.0 + 1.0 / model.n as f64 + (g_first_n - model.mean_x).powi(2) / model.sxx;
    let half = t * model.residual_se * leverage.sqrt();
    Ok(Projection {
        central,
        lo: central - half,
        hi: central + half,
    })
}

/// Full-year value: the annual record if present, else twelve months.
fn full_year(dataset: &Dataset, source: SourceKind, year: i32) -> Result<Option<FlowRecord>> {
    if let Some(r) = dataset.aggregate(Period::annual(year), source)? {
        return Ok(Some(r));
    }
    match cumulative_months(dataset, source, year, 12) {
        Ok(r) => Ok(Some(r)),
        Err(Error::IncompletePrefix { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn prefix(dataset: &Dataset, source: SourceKind, year: i32, n: u8) -> Result<Option<FlowRecord>> {
    match cumulative_months(dataset, source, year, n) {
        Ok(r) => Ok(Some(r)),
        Err(Error::IncompletePrefix { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Historical (year, partial-year growth, full-year growth) pairs for one
/// flow, for every year in `years` where both bases are positive.
pub fn growth_pairs(
    dataset: &Dataset,
    source: SourceKind,
    flow: FlowKind,
    n_months: u8,
    years: impl IntoIterator<Item = i32>,
) -> Result<Vec<(i32, f64, f64)>> {
    let mut out = Vec::new();
    for y in years {
        let (Some(p1), Some(p0), Some(f1), Some(f0)) = (
            prefix(dataset, source, y, n_months)?,
            prefix(dataset, source, y - 1, n_months)?,
            full_year(dataset, source, y)?,
            full_year(dataset, source, y - 1)?,
        ) else {
            continue;
        };
        if let (Ok(x), Ok(g)) = (
            growth_pct(flow.of(&p0), flow.of(&p1)),
            growth_pct(flow.of(&f0), flow.of(&f1)),
        ) {
            out.push((y, x, g));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NowcastOptions {
    pub level: f64,
    /// Fit one model per flow across all fuels instead of per fuel.
    pub pooled: bool,
    /// First year of the regression panel (full-year growth year).
    pub history_from: i32,
    /// First year of the stock-change history used for its σ.
    pub stock_from: i32,
}

impl Default for NowcastOptions {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            pooled: false,
            history_from: 1949,
            stock_from: 2000,
        }
    }
}

/// Stock-change uncertainty for a projected year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StockTerm {
    /// One σ in native units.
    pub sigma_native: f64,
    /// The same σ expressed as percentage points of emission growth.
    pub growth_sigma_pct: f64,
}

/// Converts native-unit consumption to carbon for one fuel and year.
fn carbon_per_native(scenario: &EmissionFactorSet, source: SourceKind, year: i32) -> Result<f64> {
    let r = scenario.resolve(source, year)?;
    Ok(r.heating_value / 1000.0 * r.carbon_content * r.oxidation)
}

fn apparent_native(r: &FlowRecord) -> f64 {
    r.production.magnitude() + r.import.magnitude()
        - r.export.magnitude()
        - r.stock_change.magnitude()
        - r.non_energy_use.magnitude()
}

/// σ of the projected year's stock change, from the annual history
/// `from..target_year`, and its effect on the emission growth rate.
pub fn stock_projection_sigma(
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    source: SourceKind,
    target_year: i32,
    from: i32,
) -> Result<StockTerm> {
    let history = stock_history(dataset, source, from, target_year - 1)?;
    let sigma = stock_change_sigma(&history)?;
    let prior = dataset.annual(source, target_year - 1)?;
    let base = carbon_per_native(scenario, source, target_year - 1)? * apparent_native(&prior);
    let k = carbon_per_native(scenario, source, target_year)?;
    if !(base > 0.0) {
        return Err(Error::NonPositiveBase(base));
    }
    Ok(StockTerm {
        sigma_native: sigma,
        growth_sigma_pct: 100.0 * k * sigma / base,
    })
}

/// Projected flow growth for one fuel: central percent and normal σ.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProjection {
    pub flow: FlowKind,
    pub partial_growth: Option<f64>,
    pub model: Option<PartialYearModel>,
    pub projection: Projection,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceProjection {
    pub source: SourceKind,
    pub flows: Vec<FlowProjection>,
    pub stock: Option<StockTerm>,
    pub growth: Projection,
}

/// Mixes a user seed with a tag so each source gets its own streams.
fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[allow(clippy::too_many_arguments)]
fn project_flow(
    dataset: &Dataset,
    source: SourceKind,
    flow: FlowKind,
    target_year: i32,
    n_months: u8,
    opts: &NowcastOptions,
    prior_full: f64,
    z: f64,
) -> Result<FlowProjection> {
    if prior_full == 0.0 {
        return Ok(FlowProjection {
            flow,
            partial_growth: None,
            model: None,
            projection: Projection::point(0.0),
            sigma: 0.0,
        });
    }
    let current = cumulative_months(dataset, source, target_year, n_months)?;
    let base = cumulative_months(dataset, source, target_year - 1, n_months)?;
    let g = growth_pct(flow.of(&base), flow.of(&current))?;
    let years = opts.history_from..target_year;
    let pairs: Vec<(f64, f64)> = if opts.pooled {
        let mut all = Vec::new();
        for s in SourceKind::FUELS {
            all.extend(growth_pairs(dataset, s, flow, n_months, years.clone())?);
        }
        all.into_iter().map(|(_, x, y)| (x, y)).collect()
    } else {
        growth_pairs(dataset, source, flow, n_months, years)?
            .into_iter()
            .map(|(_, x, y)| (x, y))
            .collect()
    };
    let model = fit_partial_year_model(&pairs)?.labelled((!opts.pooled).then_some(source), flow);
    let projection = project_full_year(&model, g, opts.level)?;
    Ok(FlowProjection {
        flow,
        partial_growth: Some(g),
        sigma: if z > 0.0 {
            projection.half_width() / z
        } else {
            0.0
        },
        model: Some(model),
        projection,
    })
}

/// Emission growth projection for one source.
pub fn project_source(
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    source: SourceKind,
    target_year: i32,
    n_months: u8,
    opts: &NowcastOptions,
    spec: &UncertaintySpec,
) -> Result<SourceProjection> {
    let z = normal_quantile(opts.level)?;
    let prior = dataset.annual(source, target_year - 1)?;
    if source == SourceKind::Cement {
        let fp = project_flow(
            dataset,
            source,
            FlowKind::Production,
            target_year,
            n_months,
            opts,
            prior.production.magnitude(),
            z,
        )?;
        return Ok(SourceProjection {
            source,
            growth: fp.projection,
            flows: vec![fp],
            stock: None,
        });
    }

    let flows = FlowKind::ALL
        .iter()
        .map(|f| {
            project_flow(
                dataset,
                source,
                *f,
                target_year,
                n_months,
                opts,
                f.of(&prior),
                z,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let stock = stock_projection_sigma(dataset, scenario, source, target_year, opts.stock_from)?;

    let k_prior = carbon_per_native(scenario, source, target_year - 1)?;
    let k_target = carbon_per_native(scenario, source, target_year)?;
    let base = k_prior * apparent_native(&prior);
    if !(base > 0.0) {
        return Err(Error::NonPositiveBase(base));
    }
    let levels = [
        prior.production.magnitude(),
        prior.import.magnitude(),
        -prior.export.magnitude(),
    ];
    let fixed = -prior.stock_change.magnitude() - prior.non_energy_use.magnitude();
    let growth_at = |g: [f64; 3], stock_shift: f64| {
        let native: f64 = levels
            .iter()
            .zip(g)
            .map(|(l, g)| l * (1.0 + g / 100.0))
            .sum::<f64>()
            + fixed
            - stock_shift;
        100.0 * (k_target * native - base) / base
    };
    let central_g = [0, 1, 2].map(|i| flows[i].projection.central);
    let central = growth_at(central_g, 0.0);

    let sigmas = [
        flows[0].sigma,
        flows[1].sigma,
        flows[2].sigma,
        stock.sigma_native,
    ];
    let growth = if sigmas.iter().all(|s| *s == 0.0) {
        Projection::point(central)
    } else {
        let seed = derive_seed(spec.seed, source as u64 + 1);
        let mut draws = map_range(Execution::default(), spec.draws.max(1), |i| {
            let mut rng = draw_rng(seed, i as u64);
            let z: [f64; 4] = std::array::from_fn(|_| truncated_normal(&mut rng));
            let g = [0, 1, 2].map(|j| central_g[j] + sigmas[j] * z[j]);
            growth_at(g, sigmas[3] * z[3])
        });
        draws.sort_by(f64::total_cmp);
        Projection {
            central,
            lo: percentile(&draws, LOWER_PERCENTILE),
            hi: percentile(&draws, UPPER_PERCENTILE),
        }
    };
    Ok(SourceProjection {
        source,
        flows,
        stock: Some(stock),
        growth,
    })
}

/// Per-source and total emission growth for a target year.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthProjection {
    pub year: i32,
    pub basis_months: u8,
    pub per_source: BTreeMap<SourceKind, Projection>,
    pub total: Projection,
}

/// Share-weighted total growth. The interval samples each source's growth
/// as an independent normal matching its interval (σ = half width / z) and
/// reports the 16th/84th percentiles of the weighted sum.
pub fn combine_total_growth(
    per_source: &BTreeMap<SourceKind, Projection>,
    prior_year: &EmissionEstimate,
    spec: &UncertaintySpec,
    level: f64,
) -> Result<Projection> {
    let total = prior_year.total.magnitude();
    if !(total > 0.0) {
        return Err(Error::NonPositiveBase(total));
    }
    if let Some((s, q)) = prior_year
        .per_source
        .iter()
        .find(|(_, q)| q.magnitude() < 0.0)
    {
        return Err(Error::Domain(format!(
            "negative prior-year emissions for {s}: {q}"
        )));
    }
    let weights: Vec<(SourceKind, f64)> = prior_year
        .per_source
        .iter()
        .map(|(s, q)| (*s, q.magnitude() / total))
        .collect();
    let sum: f64 = weights.iter().map(|(_, w)| w).sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "emission shares sum to {sum}, not 1"
        )));
    }
    let missing: Vec<String> = weights
        .iter()
        .filter(|(s, w)| *w > 0.0 && !per_source.contains_key(s))
        .map(|(s, _)| format!("projection for {s}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData(missing));
    }
    let z = normal_quantile(level)?;
    let terms: Vec<(f64, f64, f64)> = weights
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(s, w)| {
            let p = per_source[s];
            (*w, p.central, p.half_width() / z)
        })
        .collect();
    let central: f64 = terms.iter().map(|(w, g, _)| w * g).sum();
    if terms.iter().all(|(_, _, sd)| *sd == 0.0) {
        return Ok(Projection::point(central));
    }
    let seed = derive_seed(spec.seed, 0);
    let mut draws = map_range(Execution::default(), spec.draws.max(1), |i| {
        let mut rng = draw_rng(seed, i as u64);
        terms
            .iter()
            .map(|(w, g, sd)| w * (g + sd * truncated_normal(&mut rng)))
            .sum::<f64>()
    });
    draws.sort_by(f64::total_cmp);
    Ok(Projection {
        central,
        lo: percentile(&draws, LOWER_PERCENTILE),
        hi: percentile(&draws, UPPER_PERCENTILE),
    })
}

/// Full pipeline: per-source projections for every source in the dataset,
/// combined with prior-year emission shares.
pub fn nowcast(
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    target_year: i32,
    n_months: u8,
    opts: &NowcastOptions,
    spec: &UncertaintySpec,
) -> Result<(GrowthProjection, Vec<SourceProjection>)> {
    if !(1..=11).contains(&n_months) {
        return Err(Error::Domain(format!(
            "basis {n_months} months outside 1..=11"
        )));
    }
    let prior = total_emissions(dataset, scenario, target_year - 1..=target_year - 1)?
        .pop()
        .expect("one year");
    let sources = dataset.sources();
    let mut missing = Vec::new();
    for s in &sources {
        if let Err(Error::IncompletePrefix {
            year, missing: m, ..
        }) = cumulative_months(dataset, *s, target_year, n_months)
        {
            missing.push(format!("{s} {year} month(s) {m:?}"));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingData(missing));
    }
    let details = sources
        .iter()
        .map(|s| project_source(dataset, scenario, *s, target_year, n_months, opts, spec))
        .collect::<Result<Vec<_>>>()?;
    let per_source: BTreeMap<_, _> = details.iter().map(|d| (d.source, d.growth)).collect();
    let total = combine_total_growth(&per_source, &prior, spec, opts.level)?;
    Ok((
        GrowthProjection {
            year: target_year,
            basis_months: n_months,
            per_source,
            total,
        },
        details,
    ))
}
