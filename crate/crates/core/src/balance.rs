//! Apparent energy consumption and growth-rate arithmetic.
//!
//! apparent = production + import − export − stock_change − non_energy_use
//!
//! Stock change is positive for a stock build. Negative results are kept
//! and flagged, never clamped.

use std::collections::BTreeMap;

use crate::domain::{convert_unit, FlowRecord, HeatingValueSeries, Period, Quantity, SourceKind};
use crate::error::{Error, Result};
use crate::ingest::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct ApparentConsumption {
    pub source: SourceKind,
    pub period: Period,
    pub native: Quantity,
    pub energy: Quantity,
    pub anomalous: bool,
}

/// Mass-balance consumption of one record, in native units and in TJ using
/// that year's heating value (monthly records use the annual value).
pub fn apparent_consumption(
    record: &FlowRecord,
    hv: &HeatingValueSeries,
) -> Result<ApparentConsumption> {
    if !record.source.is_fuel() {
        return Err(Error::UnsupportedSource(record.source));
    }
    let native = record
        .production
        .try_add(&record.import)?
        .try_sub(&record.export)?
        .try_sub(&record.stock_change)?
        .try_sub(&record.non_energy_use)?;
    let energy = convert_unit(&native, record.source, record.period.year, hv)?;
    let anomalous = native.magnitude() < 0.0;
    if anomalous {
        log::warn!(
            "negative apparent consumption for {} {}: {}",
            record.source,
            record.period,
            native
        );
    }
    Ok(ApparentConsumption {
        source: record.source,
        period: record.period,
        native,
        energy,
        anomalous,
    })
}

/// Percent change between two periods on an identical basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthRate {
    pub base: Period,
    pub current: Period,
    pub rate_pct: f64,
}

/// Percent change from `base` to `current`; the base must be strictly
/// positive.
pub fn growth_pct(base: f64, current: f64) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::NonPositiveBase(base));
    }
    Ok(100.0 * (current - base) / base)
}

/// Year-on-year growth of `series` at `at`, compared against the same month
/// index one year earlier.
pub fn yoy_growth(series: &BTreeMap<Period, Quantity>, at: Period) -> Result<GrowthRate> {
    let prev = at.predecessor();
    let missing = |p: Period| Error::MissingData(vec![format!("no value for {p}")]);
    let current = series.get(&at).ok_or_else(|| missing(at))?;
    let base = series.get(&prev).ok_or_else(|| missing(prev))?;
    if current.unit() != base.unit() {
        return Err(Error::UnitMismatch {
            expected: base.unit(),
            found: current.unit(),
        });
    }
    Ok(GrowthRate {
        base: prev,
        current: at,
        rate_pct: growth_pct(base.magnitude(), current.magnitude())?,
    })
}

/// Growth of a product's cumulative first-`n_months` output, `year` versus
/// `year − 1`.
pub fn driver_growth(
    dataset: &Dataset,
    product: &str,
    year: i32,
    n_months: u8,
) -> Result<GrowthRate> {
    let current = dataset.product_prefix(product, year, n_months)?;
    let base = dataset.product_prefix(product, year - 1, n_months)?;
    Ok(GrowthRate {
        base: Period::monthly(year - 1, n_months)?,
        current: Period::monthly(year, n_months)?,
        rate_pct: growth_pct(base, current)?,
    })
}

/// Apparent consumption for every record of the dataset matching `filter`,
/// in key order. Evaluated in parallel when the `parallel` feature is on.
pub fn apparent_batch(
    dataset: &Dataset,
    hv: &HeatingValueSeries,
    filter: impl Fn(&FlowRecord) -> bool + Sync,
) -> Result<Vec<ApparentConsumption>> {
    let records: Vec<&FlowRecord> = dataset.records().filter(|r| filter(r)).collect();
    crate::exec::map_collect(crate::exec::Execution::default(), &records, |r| {
        apparent_consumption(r, hv)
    })
    .into_iter()
    .collect()
}
