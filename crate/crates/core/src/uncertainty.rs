//! Monte Carlo propagation of input uncertainty to emission totals.
//!
//! Every uncertain input is perturbed by an independent normal relative
//! factor `1 + σ·z`, with `z` truncated to [−4, 4] by resampling. Stock
//! change may instead carry an absolute σ (native units), added as `σ·z`.
//! The band is the empirical 16th–84th percentile of the recomputed totals.
//!
//! # Random streams
//!
//! Draw `i` uses ChaCha8 seeded with `seed_from_u64(seed)` and switched to
//! stream `i`. The k-th truncated standard normal of that stream
//! (rand_distr `StandardNormal`) belongs to the k-th (input kind, source)
//! pair in [`InputKind::ALL`] × [`SourceKind::ALL`] order, whether or not
//! that input is active. Results therefore do not depend on thread count or
//! on which other inputs are switched on.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::{EmissionFactorSet, Period, Quantity, SourceKind, Unit};
use crate::emission::YearModel;
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::ingest::Dataset;

/// Minimum number of draws for which a band is reported.
pub const MIN_BAND_DRAWS: usize = 100;
/// Truncation bound in standard deviations.
pub const TRUNCATION: f64 = 4.0;
pub const LOWER_PERCENTILE: f64 = 0.16;
pub const UPPER_PERCENTILE: f64 = 0.84;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InputKind {
    Production,
    Import,
    Export,
    StockChange,
    StatisticalError,
    HeatingValue,
    CarbonContent,
    Oxidation,
    CementFactor,
    CementProduction,
}

impl InputKind {
    pub const ALL: [InputKind; 10] = [
        Self::Production,
        Self::Import,
        Self::Export,
        Self::StockChange,
        Self::StatisticalError,
        Self::HeatingValue,
        Self::CarbonContent,
        Self::Oxidation,
        Self::CementFactor,
        Self::CementProduction,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Production => "production",
            Self::Import => "import",
            Self::Export => "export",
            Self::StockChange => "stock_change",
            Self::StatisticalError => "statistical_error",
            Self::HeatingValue => "heating_value",
            Self::CarbonContent => "carbon_content",
            Self::Oxidation => "oxidation",
            Self::CementFactor => "cement_factor",
            Self::CementProduction => "cement_production",
        }
    }

    pub fn applies_to(&self, source: SourceKind) -> bool {
        matches!(self, Self::CementFactor | Self::CementProduction)
            == (source == SourceKind::Cement)
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inventory_change" {
            return Ok(Self::StockChange);
        }
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown uncertainty input '{s}'")))
    }
}

fn source_index(source: SourceKind) -> usize {
    source as usize
}

/// Absolute stock-change uncertainty, overriding the relative σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StockSigma {
    /// One σ in native units (t or m³).
    Absolute(f64),
    /// Sample standard deviation of annual stock changes from `from` up to
    /// the year before the evaluated one.
    History { from: i32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySpec {
    sigmas: BTreeMap<(InputKind, SourceKind), f64>,
    pub stock_sigma: BTreeMap<SourceKind, StockSigma>,
    pub draws: usize,
    pub seed: u64,
}

impl Default for UncertaintySpec {
    /// 2% on production and trade, 0.3% on carbon content, 10 000 draws.
    fn default() -> Self {
        let mut spec = Self::none();
        for s in SourceKind::FUELS {
            for k in [InputKind::Production, InputKind::Import, InputKind::Export] {
                spec.sigmas.insert((k, s), 0.02);
            }
            spec.sigmas.insert((InputKind::CarbonContent, s), 0.003);
        }
        spec
    }
}

impl UncertaintySpec {
    /// No uncertain inputs.
    pub fn none() -> Self {
        Self {
            sigmas: BTreeMap::new(),
            stock_sigma: BTreeMap::new(),
            draws: 10_000,
            seed: 42,
        }
    }

    /// Sets a relative σ. `production` on cement is an alias for
    /// `cement_production`.
    pub fn set_sigma(&mut self, kind: InputKind, source: SourceKind, sigma: f64) -> Result<()> {
        let kind = match (kind, source) {
            (InputKind::Production, SourceKind::Cement) => InputKind::CementProduction,
            _ => kind,
        };
        if !kind.applies_to(source) {
            return Err(Error::Config(format!("{kind} does not apply to {source}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Config(format!(
                "sigma for {kind}.{source} must be >= 0"
            )));
        }
        self.sigmas.insert((kind, source), sigma);
        Ok(())
    }

    pub fn with_sigma(mut self, kind: InputKind, source: SourceKind, sigma: f64) -> Result<Self> {
        self.set_sigma(kind, source, sigma)?;
        Ok(self)
    }

    pub fn with_draws(mut self, draws: usize, seed: u64) -> Self {
        self.draws = draws;
        self.seed = seed;
        self
    }

    pub fn sigma(&self, kind: InputKind, source: SourceKind) -> f64 {
        self.sigmas.get(&(kind, source)).copied().unwrap_or(0.0)
    }

    pub fn sigmas(&self) -> impl Iterator<Item = ((InputKind, SourceKind), f64)> + '_ {
        self.sigmas.iter().map(|(k, v)| (*k, *v))
    }
}

/// Multiplicative factors per (input, source) plus additive stock shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    factors: [[f64; 4]; 10],
    stock_shift: [f64; 4],
}

impl Perturbation {
    pub fn identity() -> Self {
        Self {
            factors: [[1.0; 4]; 10],
            stock_shift: [0.0; 4],
        }
    }

    pub fn factor(&self, kind: InputKind, source: SourceKind) -> f64 {
        self.factors[kind.index()][source_index(source)]
    }

    pub fn stock_shift(&self, source: SourceKind) -> f64 {
        self.stock_shift[source_index(source)]
    }

    pub fn set_factor(&mut self, kind: InputKind, source: SourceKind, value: f64) {
        self.factors[kind.index()][source_index(source)] = value;
    }
}

/// How one active input is perturbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub kind: InputKind,
    pub source: SourceKind,
    pub sigma: f64,
    pub absolute: bool,
}

impl Slot {
    fn z_index(&self) -> usize {
        self.kind.index() * 4 + source_index(self.source)
    }
}

/// RNG for one draw: ChaCha8 from `seed`, stream = draw index.
pub fn draw_rng(seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    rng
}

/// Standard normal truncated to ±[`TRUNCATION`] by resampling.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= TRUNCATION {
            return z;
        }
    }
}

/// Linear-interpolation percentile (`p` in [0, 1]) of ascending data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample standard deviation (n − 1) of an annual stock-change series.
pub fn stock_change_sigma(series: &[f64]) -> Result<f64> {
    if series.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: series.len(),
        });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let ss: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Annual stock changes of `source` for `from..=last`, skipping absent years.
pub fn stock_history(
    dataset: &Dataset,
    source: SourceKind,
    from: i32,
    last: i32,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for y in from..=last {
        if let Some(r) = dataset.aggregate(Period::annual(y), source)? {
            out.push(r.stock_change.magnitude());
        }
    }
    Ok(out)
}

/// Active inputs for a model, in canonical order.
pub fn active_slots(
    dataset: &Dataset,
    model: &YearModel,
    spec: &UncertaintySpec,
) -> Result<Vec<Slot>> {
    let present = |s: SourceKind| match s {
        SourceKind::Cement => model.cement.is_some(),
        f => model.fuels.contains_key(&f),
    };
    let mut slots = Vec::new();
    for kind in InputKind::ALL {
        for source in SourceKind::ALL {
            if !kind.applies_to(source) || !present(source) {
                continue;
            }
            let (sigma, absolute) = match (kind, spec.stock_sigma.get(&source)) {
                (InputKind::StockChange, Some(StockSigma::Absolute(v))) => (*v, true),
                (InputKind::StockChange, Some(StockSigma::History { from })) => {
                    let hist = stock_history(dataset, source, *from, model.year - 1)?;
                    (stock_change_sigma(&hist)?, true)
                }
                _ => (spec.sigma(kind, source), false),
            };
            if sigma > 0.0 {
                slots.push(Slot {
                    kind,
                    source,
                    sigma,
                    absolute,
                });
            }
        }
    }
    Ok(slots)
}

fn perturbation(seed: u64, draw: usize, slots: &[Slot]) -> Perturbation {
    let mut rng = draw_rng(seed, draw as u64);
    // Later normals in the stream cannot affect earlier ones, so stopping
    // after the last active slot leaves every used value unchanged.
    let used = slots.iter().map(|s| s.z_index() + 1).max().unwrap_or(0);
    let mut z = [0.0; 40];
    for v in z.iter_mut().take(used) {
        *v = truncated_normal(&mut rng);
    }
    let mut p = Perturbation::identity();
    for slot in slots {
        let zi = z[slot.z_index()];
        if slot.absolute {
            p.stock_shift[source_index(slot.source)] = slot.sigma * zi;
        } else {
            p.set_factor(slot.kind, slot.source, 1.0 + slot.sigma * zi);
        }
    }
    p
}

/// Total CO₂ (t) for every draw, in draw order.
pub fn sample_totals(
    exec: Execution,
    model: &YearModel,
    slots: &[Slot],
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    map_range(exec, draws, |i| {
        model.carbon(&perturbation(seed, i, slots)) * crate::domain::CO2_PER_C
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo68: Quantity,
    pub hi68: Quantity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub kind: InputKind,
    pub source: SourceKind,
    pub variance: f64,
    pub share_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyResult {
    pub year: i32,
    pub scenario_name: String,
    pub central: Quantity,
    /// `None` when fewer than [`MIN_BAND_DRAWS`] draws were requested.
    pub band: Option<Band>,
    pub draws_used: usize,
    pub seed: u64,
    pub contributions: Vec<Contribution>,
}

impl UncertaintyResult {
    pub fn band(&self) -> Result<Band> {
        self.band.ok_or(Error::BandRefused {
            draws: self.draws_used,
            minimum: MIN_BAND_DRAWS,
        })
    }

    /// Half band width relative to the central value.
    pub fn relative_half_width(&self) -> Option<f64> {
        self.band
            .map(|b| (b.hi68.magnitude() - b.lo68.magnitude()) / 2.0 / self.central.magnitude())
    }
}

/// One-sigma band of a year's total emissions.
pub fn monte_carlo_band(
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    year: i32,
    spec: &UncertaintySpec,
) -> Result<UncertaintyResult> {
    monte_carlo_band_with(Execution::default(), dataset, scenario, year, spec)
}

pub fn monte_carlo_band_with(
    exec: Execution,
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    year: i32,
    spec: &UncertaintySpec,
) -> Result<UncertaintyResult> {
    let model = YearModel::gather(dataset, scenario, year)?;
    let central = Quantity::new(model.central_co2(), Unit::TonneCo2)?;
    let slots = active_slots(dataset, &model, spec)?;
    let band = if spec.draws < MIN_BAND_DRAWS {
        log::warn!(
            "{} draws requested; at least {MIN_BAND_DRAWS} needed for a band",
            spec.draws
        );
        None
    } else if slots.is_empty() {
        Some(Band {
            lo68: central,
            hi68: central,
        })
    } else {
        let mut totals = sample_totals(exec, &model, &slots, spec.draws, spec.seed);
        totals.sort_by(f64::total_cmp);
        Some(Band {
            lo68: Quantity::new(percentile(&totals, LOWER_PERCENTILE), Unit::TonneCo2)?,
            hi68: Quantity::new(percentile(&totals, UPPER_PERCENTILE), Unit::TonneCo2)?,
        })
    };
    Ok(UncertaintyResult {
        year,
        scenario_name: scenario.scenario_name.clone(),
        central,
        band,
        draws_used: spec.draws,
        seed: spec.seed,
        contributions: Vec::new(),
    })
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// One-at-a-time variance attribution: each active input is sampled alone
/// and its share of the summed variances reported, largest first.
pub fn contribution_decomposition(
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    year: i32,
    spec: &UncertaintySpec,
) -> Result<Vec<Contribution>> {
    contribution_decomposition_with(Execution::default(), dataset, scenario, year, spec)
}

pub fn contribution_decomposition_with(
    exec: Execution,
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    year: i32,
    spec: &UncertaintySpec,
) -> Result<Vec<Contribution>> {
    if spec.draws < MIN_BAND_DRAWS {
        return Err(Error::BandRefused {
            draws: spec.draws,
            minimum: MIN_BAND_DRAWS,
        });
    }
    let model = YearModel::gather(dataset, scenario, year)?;
    let slots = active_slots(dataset, &model, spec)?;
    let variances: Vec<(Slot, f64)> = slots
        .iter()
        .map(|slot| {
            let totals = sample_totals(
                exec,
                &model,
                std::slice::from_ref(slot),
                spec.draws,
                spec.seed,
            );
            (*slot, variance(&totals))
        })
        .collect();
    let sum: f64 = variances.iter().map(|(_, v)| v).sum();
    if !(sum > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut out: Vec<Contribution> = variances
        .into_iter()
        .map(|(slot, v)| Contribution {
            kind: slot.kind,
            source: slot.source,
            variance: v,
            share_pct: 100.0 * v / sum,
        })
        .collect();
    out.sort_by(|a, b| b.share_pct.total_cmp(&a.share_pct));
    Ok(out)
}
