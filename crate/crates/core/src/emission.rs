//! Emissions from fuel combustion and cement production, scenario
//! comparison and intensity indicators.
//!
//! fuel carbon   = energy (TJ) × carbon content (tC/TJ) × oxidation
//! cement carbon = production (t) × cement factor (tC/t)
//!
//! Carbon is converted to CO₂ only when an estimate is reported.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use crate::balance::{apparent_consumption, growth_pct, ApparentConsumption};
use crate::domain::{
    EmissionFactorSet, Period, Quantity, ResolvedFactors, SourceKind, Unit, CO2_PER_C,
};
use crate::error::{Error, Result};
use crate::exec::{map_collect, Execution};
use crate::ingest::Dataset;
use crate::uncertainty::{InputKind, Perturbation};

/// Emissions for one year under one scenario, in tCO₂.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionEstimate {
    pub year: i32,
    pub scenario_name: String,
    pub per_source: BTreeMap<SourceKind, Quantity>,
    /// Apparent consumption in TJ for each fuel.
    pub energy: BTreeMap<SourceKind, Quantity>,
    pub total: Quantity,
    pub band: Option<(Quantity, Quantity)>,
}

impl EmissionEstimate {
    pub fn source_share(&self, source: SourceKind) -> f64 {
        self.per_source
            .get(&source)
            .map_or(0.0, |q| q.magnitude() / self.total.magnitude())
    }
}

fn carbon_to_co2(tc: f64) -> Result<Quantity> {
    Quantity::new(tc * CO2_PER_C, Unit::TonneCo2)
}

fn fuel_carbon(ac: &ApparentConsumption, f: &EmissionFactorSet) -> Result<Quantity> {
    let r = f.resolve(ac.source, ac.period.year)?;
    Quantity::new(
        ac.energy.magnitude() * r.carbon_content * r.oxidation,
        Unit::TonneCarbon,
    )
}

/// CO₂ from the apparent consumption of one fuel. `ac.energy` must have been
/// computed with the same scenario's heating values.
pub fn fuel_emissions(ac: &ApparentConsumption, f: &EmissionFactorSet) -> Result<Quantity> {
    carbon_to_co2(fuel_carbon(ac, f)?.magnitude())
}

/// CO₂ from cement production (process emissions only).
pub fn cement_emissions(production: &Quantity, f: &EmissionFactorSet) -> Result<Quantity> {
    if production.unit() != Unit::Tonne {
        return Err(Error::UnitMismatch {
            expected: Unit::Tonne,
            found: production.unit(),
        });
    }
    if production.magnitude() < 0.0 {
        return Err(Error::Domain(format!(
            "negative cement production {}",
            production.magnitude()
        )));
    }
    carbon_to_co2(production.magnitude() * f.cement_factor()?)
}

fn year_estimate(
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    sources: &[SourceKind],
    year: i32,
) -> Result<EmissionEstimate> {
    let mut per_source = BTreeMap::new();
    let mut energy = BTreeMap::new();
    let mut total_c = 0.0;
    for &source in sources {
        let mut carbon = 0.0;
        let mut tj = 0.0;
        for r in dataset.records_for(Period::annual(year), source) {
            if source.is_fuel() {
                let ac = apparent_consumption(r, &scenario.heating_value)?;
                carbon += fuel_carbon(&ac, scenario)?.magnitude();
                tj += ac.energy.magnitude();
            } else {
                carbon += r.production.magnitude() * scenario.cement_factor()?;
            }
        }
        if source.is_fuel() {
            energy.insert(source, Quantity::new(tj, Unit::Terajoule)?);
        }
        total_c += carbon;
        per_source.insert(source, carbon_to_co2(carbon)?);
    }
    Ok(EmissionEstimate {
        year,
        scenario_name: scenario.scenario_name.clone(),
        per_source,
        energy,
        total: carbon_to_co2(total_c)?,
        band: None,
    })
}

/// Per-year emissions for every source present in the dataset. Fails with
/// a single error listing every missing (source, year).
pub fn total_emissions(
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    years: RangeInclusive<i32>,
) -> Result<Vec<EmissionEstimate>> {
    total_emissions_with(Execution::default(), dataset, scenario, years)
}

pub fn total_emissions_with(
    exec: Execution,
    dataset: &Dataset,
    scenario: &EmissionFactorSet,
    years: RangeInclusive<i32>,
) -> Result<Vec<EmissionEstimate>> {
    let sources = dataset.sources();
    if sources.is_empty() {
        return Err(Error::MissingData(vec![
            "dataset has no flow records".into()
        ]));
    }
    let years: Vec<i32> = years.collect();
    let gaps: Vec<String> = years
        .iter()
        .flat_map(|y| sources.iter().map(move |s| (*y, *s)))
        .filter(|(y, s)| dataset.records_for(Period::annual(*y), *s).is_empty())
        .map(|(y, s)| format!("{s} {y}"))
        .collect();
    if !gaps.is_empty() {
        return Err(Error::MissingData(gaps));
    }
    map_collect(exec, &years, |y| {
        year_estimate(dataset, scenario, &sources, *y)
    })
    .into_iter()
    .collect()
}

/// One row of a scenario comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub estimate: EmissionEstimate,
    /// Relative deviation from the reference scenario, percent, per source.
    pub source_deviation_pct: BTreeMap<SourceKind, f64>,
    pub total_deviation_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reference: String,
    /// Year-major, then scenarios in the order given.
    pub rows: Vec<ComparisonRow>,
    /// Scenarios that failed, with their error; the rest are still reported.
    pub failures: Vec<(String, Error)>,
}

fn deviation(value: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| 100.0 * (value - reference) / reference)
}

/// Evaluates every scenario and reports deviations from `reference`.
pub fn scenario_compare(
    dataset: &Dataset,
    scenarios: &[EmissionFactorSet],
    years: RangeInclusive<i32>,
    reference: &str,
) -> Result<Comparison> {
    if scenarios.len() < 2 {
        return Err(Error::Config(format!(
            "comparison needs at least 2 scenarios, got {}",
            scenarios.len()
        )));
    }
    if !scenarios.iter().any(|s| s.scenario_name == reference) {
        return Err(Error::UnknownScenario(reference.to_string()));
    }
    let results = map_collect(Execution::default(), scenarios, |s| {
        total_emissions_with(Execution::Sequential, dataset, s, years.clone())
    });
    let mut by_name = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in scenarios.iter().zip(results) {
        match r {
            Ok(estimates) => by_name.push((s.scenario_name.clone(), estimates)),
            Err(e) => failures.push((s.scenario_name.clone(), e)),
        }
    }
    let reference_estimates = by_name
        .iter()
        .find(|(n, _)| n == reference)
        .map(|(_, e)| e.clone());
    let mut rows = Vec::new();
    for (i, year) in years.enumerate() {
        let refe = reference_estimates.as_ref().map(|e| &e[i]);
        for (_, estimates) in &by_name {
            let est = &estimates[i];
            debug_assert_eq!(est.year, year);
            let source_deviation_pct = match refe {
                Some(r) => est
                    .per_source
                    .iter()
                    .filter_map(|(s, q)| {
                        let base = r.per_source.get(s)?.magnitude();
                        Some((*s, deviation(q.magnitude(), base)?))
                    })
                    .collect(),
                None => BTreeMap::new(),
            };
            rows.push(ComparisonRow {
                estimate: est.clone(),
                source_deviation_pct,
                total_deviation_pct: refe
                    .and_then(|r| deviation(est.total.magnitude(), r.total.magnitude())),
            });
        }
    }
    Ok(Comparison {
        reference: reference.to_string(),
        rows,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indicators {
    /// tCO₂ per unit of the GDP index.
    pub co2_intensity: f64,
    pub coal_share_energy: f64,
    pub secondary_share: Option<f64>,
}

pub type DriverIndicators = BTreeMap<i32, Indicators>;

/// CO₂ intensity, coal share of fuel energy and (if present) the secondary
/// industry share, per estimate year.
pub fn intensity_indicators(
    estimates: &[EmissionEstimate],
    dataset: &Dataset,
) -> Result<DriverIndicators> {
    let missing: Vec<String> = estimates
        .iter()
        .filter(|e| !dataset.gdp.contains_key(&e.year))
        .map(|e| format!("gdp {}", e.year))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData(missing));
    }
    let mut out = BTreeMap::new();
    for e in estimates {
        let gdp = dataset.gdp[&e.year];
        if !(gdp > 0.0) {
            return Err(Error::Domain(format!("gdp for {} is not positive", e.year)));
        }
        let fuel_tj: f64 = e.energy.values().map(Quantity::magnitude).sum();
        let coal_tj = e
            .energy
            .get(&SourceKind::Coal)
            .map_or(0.0, Quantity::magnitude);
        out.insert(
            e.year,
            Indicators {
                co2_intensity: e.total.magnitude() / gdp,
                coal_share_energy: if fuel_tj > 0.0 {
                    coal_tj / fuel_tj
                } else {
                    0.0
                },
                secondary_share: dataset.secondary_share.get(&e.year).copied(),
            },
        );
    }
    Ok(out)
}

/// Year-on-year growth of totals (percent) for consecutive estimate years.
pub fn total_growth(estimates: &[EmissionEstimate]) -> Vec<(i32, f64)> {
    estimates
        .windows(2)
        .filter(|w| w[1].year == w[0].year + 1)
        .filter_map(|w| {
            growth_pct(w[0].total.magnitude(), w[1].total.magnitude())
                .ok()
                .map(|g| (w[1].year, g))
        })
        .collect()
}

/// Resolved inputs of one fuel for one year: summed flows (native units)
/// and factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FuelInputs {
    pub production: f64,
    pub import: f64,
    pub export: f64,
    pub stock_change: f64,
    pub non_energy_use: f64,
    pub factors: ResolvedFactors,
}

/// All inputs behind one year's total, flattened so the total can be
/// re-evaluated cheaply under perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct YearModel {
    pub year: i32,
    pub fuels: BTreeMap<SourceKind, FuelInputs>,
    /// Cement production (t) and factor (tC/t).
    pub cement: Option<(f64, f64)>,
}

impl YearModel {
    pub fn gather(dataset: &Dataset, scenario: &EmissionFactorSet, year: i32) -> Result<Self> {
        let mut fuels = BTreeMap::new();
        let mut cement = None;
        let mut missing = Vec::new();
        for source in dataset.sources() {
            let Some(r) = dataset.aggregate(Period::annual(year), source)? else {
                missing.push(format!("{source} {year}"));
                continue;
            };
            if source.is_fuel() {
                fuels.insert(
                    source,
                    FuelInputs {
                        production: r.production.magnitude(),
                        import: r.import.magnitude(),
                        export: r.export.magnitude(),
                        stock_change: r.stock_change.magnitude(),
                        non_energy_use: r.non_energy_use.magnitude(),
                        factors: scenario.resolve(source, year)?,
                    },
                );
            } else {
                cement = Some((r.production.magnitude(), scenario.cement_factor()?));
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingData(missing));
        }
        Ok(Self {
            year,
            fuels,
            cement,
        })
    }

    /// Carbon (tC) of one source under a perturbation.
    pub fn source_carbon(&self, source: SourceKind, p: &Perturbation) -> f64 {
        let k = |kind| p.factor(kind, source);
        match source {
            SourceKind::Cement => self.cement.map_or(0.0, |(prod, ef)| {
                prod * k(InputKind::CementProduction) * ef * k(InputKind::CementFactor)
            }),
            fuel => self.fuels.get(&fuel).map_or(0.0, |f| {
                let native = f.production * k(InputKind::Production)
                    + f.import * k(InputKind::Import)
                    - f.export * k(InputKind::Export)
                    - (f.stock_change * k(InputKind::StockChange) + p.stock_shift(fuel))
                    - f.non_energy_use;
                let native = native * k(InputKind::StatisticalError);
                let tj = native * f.factors.heating_value * k(InputKind::HeatingValue) / 1000.0;
                tj * f.factors.carbon_content
                    * k(InputKind::CarbonContent)
                    * f.factors.oxidation
                    * k(InputKind::Oxidation)
            }),
        }
    }

    /// Total carbon (tC) under a perturbation.
    pub fn carbon(&self, p: &Perturbation) -> f64 {
        SourceKind::ALL
            .iter()
            .map(|s| self.source_carbon(*s, p))
            .sum()
    }

    /// Total CO₂ (t) with no perturbation.
    pub fn central_co2(&self) -> f64 {
        self.carbon(&Perturbation::identity()) * CO2_PER_C
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FlowRecord, HeatingValueSeries};
    use crate::ingest::preset;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn study() -> EmissionFactorSet {
        preset("this-study")
            .unwrap()
            .with_cement_factor(0.12)
            .unwrap()
    }

    fn coal_ac(tonnes: f64, hv: &HeatingValueSeries) -> ApparentConsumption {
        let r = FlowRecord::from_native(
            Period::annual(2018),
            SourceKind::Coal,
            [tonnes, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        apparent_consumption(&r, hv).unwrap()
    }

    #[test]
    fn megatonne_coal_under_study_factors() {
        let f = study();
        let e = fuel_emissions(&coal_ac(1e6, &f.heating_value), &f).unwrap();
        let oracle = 1e6 * 0.02095 * 26.59 * 0.92 * 44.0 / 12.0;
        assert_relative_eq!(e.magnitude(), oracle, max_relative = 1e-12);
        assert!((e.magnitude() / 1.8792e6 - 1.0).abs() < 1e-3);
        assert_eq!(e.unit(), Unit::TonneCo2);
    }

    #[test]
    fn zero_consumption_zero_emissions() {
        let f = study();
        assert_eq!(
            fuel_emissions(&coal_ac(0.0, &f.heating_value), &f)
                .unwrap()
                .magnitude(),
            0.0
        );
    }

    #[test]
    fn full_oxidation_ratio() {
        let f = study();
        let bp = preset("BP").unwrap();
        let a = fuel_emissions(&coal_ac(1e6, &f.heating_value), &f)
            .unwrap()
            .magnitude();
        let b = fuel_emissions(&coal_ac(1e6, &bp.heating_value), &bp)
            .unwrap()
            .magnitude();
        assert_relative_eq!(b / a, 1.0 / 0.92, max_relative = 1e-12);
    }

    #[test]
    fn missing_factor_is_config_error() {
        let f = study();
        let r = FlowRecord::from_native(
            Period::annual(2018),
            SourceKind::Oil,
            [1.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let mut hv = HeatingValueSeries::new();
        hv.set(SourceKind::Oil, crate::domain::YearSeries::constant(42.0))
            .unwrap();
        let ac = apparent_consumption(&r, &hv).unwrap();
        assert!(matches!(
            fuel_emissions(&ac, &f),
            Err(Error::MissingFactor { .. })
        ));
    }

    #[test]
    fn cement_cases() {
        let f = study();
        let t = |x| Quantity::new(x, Unit::Tonne).unwrap();
        assert_eq!(cement_emissions(&t(0.0), &f).unwrap().magnitude(), 0.0);
        assert_relative_eq!(
            cement_emissions(&t(1e6), &f).unwrap().magnitude(),
            0.44e6,
            max_relative = 1e-12
        );
        let one = cement_emissions(&t(3e6), &f).unwrap().magnitude();
        let two = cement_emissions(&t(6e6), &f).unwrap().magnitude();
        assert_relative_eq!(two, 2.0 * one, max_relative = 1e-15);
        let unset = preset("this-study").unwrap();
        assert!(matches!(
            cement_emissions(&t(1.0), &unset),
            Err(Error::MissingFactor { .. })
        ));
    }

    fn dataset(coal_t: f64, cement_t: f64, years: RangeInclusive<i32>) -> Dataset {
        let mut ds = Dataset::new();
        for y in years {
            ds.insert(
                FlowRecord::from_native(
                    Period::annual(y),
                    SourceKind::Coal,
                    [coal_t, 0.0, 0.0, 0.0, 0.0],
                )
                .unwrap(),
            );
            ds.insert(FlowRecord::cement(Period::annual(y), cement_t).unwrap());
        }
        ds
    }

    #[test]
    fn single_source_total() {
        let f = study();
        let mut ds = Dataset::new();
        ds.insert(
            FlowRecord::from_native(
                Period::annual(2017),
                SourceKind::Coal,
                [5e6, 0.0, 0.0, 0.0, 0.0],
            )
            .unwrap(),
        );
        let est = total_emissions(&ds, &f, 2017..=2017).unwrap();
        assert_eq!(est[0].total, est[0].per_source[&SourceKind::Coal]);
    }

    #[test]
    fn coal_plus_cement_matches_per_term_oracle() {
        let f = study();
        let ds = dataset(2e6, 3e6, 2017..=2017);
        let est = &total_emissions(&ds, &f, 2017..=2017).unwrap()[0];
        let coal = 2e6 * 20.95 / 1000.0 * 26.59 * 0.92 * 44.0 / 12.0;
        let cement = 3e6 * 0.12 * 44.0 / 12.0;
        assert_relative_eq!(est.total.magnitude(), coal + cement, max_relative = 1e-12);
        assert_relative_eq!(
            est.per_source[&SourceKind::Cement].magnitude(),
            cement,
            max_relative = 1e-12
        );
    }

    #[test]
    fn gaps_are_listed() {
        let f = study();
        let mut ds = dataset(1.0, 1.0, 2015..=2016);
        ds.insert(
            FlowRecord::from_native(
                Period::annual(2017),
                SourceKind::Coal,
                [1.0, 0.0, 0.0, 0.0, 0.0],
            )
            .unwrap(),
        );
        let err = total_emissions(&ds, &f, 2015..=2018).unwrap_err();
        assert_eq!(
            err,
            Error::MissingData(vec![
                "cement 2017".into(),
                "coal 2018".into(),
                "cement 2018".into()
            ])
        );
    }

    #[test]
    fn comparison_ratios_and_identity() {
        let ds = dataset(1e9, 2e9, 2016..=2017);
        let study = study();
        let bp = preset("BP").unwrap().with_cement_factor(0.12).unwrap();
        let un = preset("UN-HV").unwrap().with_cement_factor(0.12).unwrap();
        let twin = study.renamed("twin");
        let cmp = scenario_compare(
            &ds,
            &[study.clone(), bp, un, twin],
            2016..=2017,
            "this-study",
        )
        .unwrap();
        assert!(cmp.failures.is_empty());
        assert_eq!(cmp.rows.len(), 8);
        for row in &cmp.rows {
            let d = row.source_deviation_pct[&SourceKind::Coal];
            match row.estimate.scenario_name.as_str() {
                "BP" => assert_relative_eq!(1.0 + d / 100.0, 1.086957, epsilon = 1e-6),
                "UN-HV" => assert_relative_eq!(1.0 + d / 100.0, 21.4 / 20.95, max_relative = 1e-12),
                _ => {
                    assert_eq!(d, 0.0);
                    assert_eq!(row.total_deviation_pct, Some(0.0));
                }
            }
        }
    }

    #[test]
    fn comparison_keeps_going_after_failure() {
        let ds = dataset(1e9, 2e9, 2017..=2017);
        let no_cement = preset("BP").unwrap();
        let cmp = scenario_compare(&ds, &[study(), no_cement], 2017..=2017, "this-study").unwrap();
        assert_eq!(cmp.rows.len(), 1);
        assert_eq!(cmp.failures.len(), 1);
        assert!(scenario_compare(&ds, &[study()], 2017..=2017, "this-study").is_err());
    }

    #[test]
    fn intensity_cases() {
        let f = study();
        let mut ds = dataset(1e6, 0.0, 2017..=2017);
        ds.gdp.insert(2017, 50.0);
        let mut est = total_emissions(&ds, &f, 2017..=2017).unwrap();
        est[0].total = Quantity::new(100.0, Unit::TonneCo2).unwrap();
        let ind = intensity_indicators(&est, &ds).unwrap();
        assert_eq!(ind[&2017].co2_intensity, 2.0);
        assert_eq!(ind[&2017].coal_share_energy, 1.0);

        est[0].energy.insert(
            SourceKind::Coal,
            Quantity::new(68.0, Unit::Terajoule).unwrap(),
        );
        est[0].energy.insert(
            SourceKind::Oil,
            Quantity::new(32.0, Unit::Terajoule).unwrap(),
        );
        assert_relative_eq!(
            intensity_indicators(&est, &ds).unwrap()[&2017].coal_share_energy,
            0.68,
            epsilon = 1e-15
        );

        ds.gdp.clear();
        assert!(matches!(
            intensity_indicators(&est, &ds),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn year_model_matches_total_emissions() {
        let f = study();
        let mut ds = dataset(3.5e9, 2.3e9, 2017..=2017);
        ds.insert(
            FlowRecord::from_native(
                Period::annual(2017),
                SourceKind::Coal,
                [1e8, 2e7, 1e6, -4e7, 5e6],
            )
            .unwrap()
            .with_sector("power"),
        );
        let est = &total_emissions(&ds, &f, 2017..=2017).unwrap()[0];
        let model = YearModel::gather(&ds, &f, 2017).unwrap();
        assert_relative_eq!(
            model.central_co2(),
            est.total.magnitude(),
            max_relative = 1e-12
        );
    }

    proptest! {
        #[test]
        fn homogeneity(k in 0.01f64..100.0, coal in 1e6f64..1e9, cement in 1e6f64..1e9) {
            let f = study();
            let a = total_emissions(&dataset(coal, cement, 2016..=2017), &f, 2016..=2017).unwrap();
            let b = total_emissions(&dataset(coal * k, cement * k, 2016..=2017), &f, 2016..=2017).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((y.total.magnitude() / x.total.magnitude() - k).abs() <= 1e-9 * k);
                prop_assert!((y.source_share(SourceKind::Coal) - x.source_share(SourceKind::Coal)).abs() < 1e-12);
            }
        }

        #[test]
        fn factor_monotonicity(bump in 1e-6f64..0.5) {
            let ds = dataset(1e9, 0.0, 2017..=2017);
            let base = study();
            let e0 = total_emissions(&ds, &base, 2017..=2017).unwrap()[0].total.magnitude();
            for which in 0..3 {
                let (v, c, o) = match which {
                    0 => (20.95 + bump, 26.59, 0.92),
                    1 => (20.95, 26.59 + bump, 0.92),
                    _ => (20.95, 26.59, (0.92 + bump).min(1.0)),
                };
                let f = EmissionFactorSet::new("b").with_fuel(SourceKind::Coal, v, c, o).unwrap().with_cement_factor(0.12).unwrap();
                let e1 = total_emissions(&ds, &f, 2017..=2017).unwrap()[0].total.magnitude();
                prop_assert!(e1 > e0);
            }
        }

        #[test]
        fn range_additivity(c0 in 1e6f64..1e9) {
            let f = study();
            let ds = dataset(c0, c0 / 2.0, 2010..=2014);
            let all: f64 = total_emissions(&ds, &f, 2010..=2014).unwrap().iter().map(|e| e.total.magnitude()).sum();
            let singles: f64 = (2010..=2014).map(|y| total_emissions(&ds, &f, y..=y).unwrap()[0].total.magnitude()).sum();
            prop_assert!((all - singles).abs() <= 1e-12 * all);
        }
    }
}
