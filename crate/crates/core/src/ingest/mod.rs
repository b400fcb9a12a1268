//! Input datasets: energy flows, auxiliary series and scenario configuration.
//!
//! Monthly records are assumed to be per-month values (not running totals).
//! Use [`cumulative_months`] to build first-n-month aggregates.

mod config;
mod tables;

pub use config::{parse_scenario_config, preset, ScenarioConfig, PRESET_NAMES};
pub use tables::{
    parse_flows_csv, parse_gdp_csv, parse_products_csv, write_flows_csv, FLOWS_HEADER,
};

use std::collections::BTreeMap;

use crate::domain::{FlowRecord, Period, SourceKind, NATIONAL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub period: Period,
    pub source: SourceKind,
    pub sector: String,
}

impl FlowKey {
    pub fn of(record: &FlowRecord) -> Self {
        Self {
            period: record.period,
            source: record.source,
            sector: record.sector.clone(),
        }
    }
}

/// A record that replaced an earlier value for the same key during a merge.
#[derive(Debug, Clone, PartialEq)]
pub struct Revision {
    pub key: FlowKey,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub flows: BTreeMap<FlowKey, FlowRecord>,
    pub gdp: BTreeMap<i32, f64>,
    pub secondary_share: BTreeMap<i32, f64>,
    pub industrial_products: BTreeMap<(String, Period), f64>,
    pub revisions: Vec<Revision>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = FlowRecord>) -> Self {
        let mut ds = Self::new();
        for r in records {
            ds.insert(r);
        }
        ds
    }

    /// Inserts a record, returning the one it replaced.
    pub fn insert(&mut self, record: FlowRecord) -> Option<FlowRecord> {
        self.flows.insert(FlowKey::of(&record), record)
    }

    /// Folds `other` into `self`; later values win and every overwritten key
    /// is recorded in `revisions`.
    pub fn merge(&mut self, other: Dataset, origin: &str) {
        for (key, record) in other.flows {
            if self.flows.insert(key.clone(), record).is_some() {
                log::info!(
                    "{origin}: revised {} {} ({})",
                    key.source,
                    key.period,
                    key.sector
                );
                self.revisions.push(Revision {
                    key,
                    origin: origin.to_string(),
                });
            }
        }
        self.gdp.extend(other.gdp);
        self.secondary_share.extend(other.secondary_share);
        self.industrial_products.extend(other.industrial_products);
        self.revisions.extend(other.revisions);
    }

    pub fn records(&self) -> impl Iterator<Item = &FlowRecord> {
        self.flows.values()
    }

    /// Sources with at least one annual record.
    pub fn sources(&self) -> Vec<SourceKind> {
        let mut out: Vec<_> = self
            .records()
            .filter(|r| r.period.is_annual())
            .map(|r| r.source)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn annual_years(&self, source: SourceKind) -> Vec<i32> {
        let mut years: Vec<_> = self
            .records()
            .filter(|r| r.source == source && r.period.is_annual())
            .map(|r| r.period.year)
            .collect();
        years.dedup();
        years
    }

    /// All records for a (period, source), across sectors.
    pub fn records_for(&self, period: Period, source: SourceKind) -> Vec<&FlowRecord> {
        let from = FlowKey {
            period,
            source,
            sector: String::new(),
        };
        self.flows
            .range(from..)
            .take_while(|(k, _)| k.period == period && k.source == source)
            .map(|(_, r)| r)
            .collect()
    }

    /// Sector-summed record for a (period, source), or `None` if absent.
    pub fn aggregate(&self, period: Period, source: SourceKind) -> Result<Option<FlowRecord>> {
        let mut acc: Option<FlowRecord> = None;
        for r in self.records_for(period, source) {
            acc = Some(match acc {
                None => r.clone().with_sector(NATIONAL),
                Some(a) => a.try_add(r)?,
            });
        }
        Ok(acc)
    }

    pub fn annual(&self, source: SourceKind, year: i32) -> Result<FlowRecord> {
        self.aggregate(Period::annual(year), source)?
            .ok_or_else(|| Error::MissingData(vec![format!("{source} {year}")]))
    }

    /// Months present for a (year, source), ascending.
    pub fn months(&self, source: SourceKind, year: i32) -> Vec<u8> {
        let mut months: Vec<u8> = self
            .records()
            .filter(|r| r.source == source && r.period.year == year)
            .filter_map(|r| r.period.month)
            .collect();
        months.dedup();
        months
    }

    /// Checks cross-record invariants: monthly contiguity, GDP and share
    /// ranges. Reports every problem found.
    pub fn check_invariants(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut seen: BTreeMap<(SourceKind, i32), Vec<u8>> = BTreeMap::new();
        for r in self.records() {
            if let Some(m) = r.period.month {
                seen.entry((r.source, r.period.year)).or_default().push(m);
            }
        }
        for ((source, year), mut months) in seen {
            months.sort_unstable();
            months.dedup();
            let last = *months.last().unwrap_or(&0);
            let missing: Vec<u8> = (1..=last).filter(|m| !months.contains(m)).collect();
            if !missing.is_empty() {
                problems.push(format!(
                    "{source} {year}: monthly records are not a contiguous prefix (missing {missing:?})"
                ));
            }
        }
        for (year, g) in &self.gdp {
            if !(g.is_finite() && *g > 0.0) {
                problems.push(format!("gdp {year}: must be > 0 (got {g})"));
            }
        }
        for (year, s) in &self.secondary_share {
            if !(0.0..=1.0).contains(s) {
                problems.push(format!("secondary_share {year}: outside [0, 1] (got {s})"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingData(problems))
        }
    }

    /// Sum of a product's output over months 1..=n of `year`.
    pub fn product_prefix(&self, product: &str, year: i32, n: u8) -> Result<f64> {
        let mut total = 0.0;
        let mut missing = Vec::new();
        for m in 1..=n {
            let period = Period::monthly(year, m)?;
            match self.industrial_products.get(&(product.to_string(), period)) {
                Some(v) => total += v,
                None => missing.push(m),
            }
        }
        if missing.is_empty() {
            Ok(total)
        } else {
            Err(Error::MissingData(vec![format!(
                "{product} {year}: month(s) {missing:?}"
            )]))
        }
    }
}

/// Field-wise sum of the monthly records for months 1..=n. The result's
/// period is `(year, n)`, marking a cumulative prefix.
pub fn cumulative_months(
    dataset: &Dataset,
    source: SourceKind,
    year: i32,
    n: u8,
) -> Result<FlowRecord> {
    if !(1..=12).contains(&n) {
        return Err(Error::Domain(format!("prefix length {n} outside 1..=12")));
    }
    let mut acc: Option<FlowRecord> = None;
    let mut missing = Vec::new();
    for m in 1..=n {
        match dataset.aggregate(Period::monthly(year, m)?, source)? {
            Some(r) => {
                acc = Some(match acc {
                    None => r,
                    Some(a) => a.try_add(&r)?,
                })
            }
            None => missing.push(m),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompletePrefix {
            year,
            fuel: source,
            missing,
        });
    }
    let mut out = acc.expect("n >= 1");
    out.period = Period::monthly(year, n)?;
    Ok(out)
}
