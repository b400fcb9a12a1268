//! Unit-safe domain types, record validation and the two conversions every
//! other module relies on: physical fuel quantity to energy, and carbon mass
//! to CO₂ mass.
//!
//! Internally all emissions are carried as tonnes of carbon. The CO₂ factor
//! 44/12 is applied once, at reporting boundaries.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Molar mass ratio CO₂ / C.
pub const CO2_PER_C: f64 = 44.0 / 12.0;

/// Raw coal heating value measured for China, GJ per tonne.
pub const COAL_HEATING_VALUE_GJ_PER_T: f64 = 20.95;

/// Default sector tag for national aggregates.
pub const NATIONAL: &str = "national";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period {
    pub year: i32,
    pub month: Option<u8>,
}

impl Period {
    pub fn annual(year: i32) -> Self {
        Self { year, month: None }
    }

    pub fn monthly(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Domain(format!("month {month} outside 1..=12")));
        }
        Ok(Self {
            year,
            month: Some(month),
        })
    }

    pub fn is_annual(&self) -> bool {
        self.month.is_none()
    }

    /// Same month index, previous year.
    pub fn predecessor(&self) -> Self {
        Self {
            year: self.year - 1,
            month: self.month,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.month {
            Some(m) => write!(f, "{}-{:02}", self.year, m),
            None => write!(f, "{}", self.year),
        }
    }
}

/// Inclusive window of acceptable calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearWindow {
    pub first: i32,
    pub last: i32,
}

impl Default for YearWindow {
    fn default() -> Self {
        Self {
            first: 1949,
            last: 2100,
        }
    }
}

impl YearWindow {
    pub fn contains(&self, year: i32) -> bool {
        (self.first..=self.last).contains(&year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Coal,
    Oil,
    NaturalGas,
    Cement,
}

impl SourceKind {
    pub const ALL: [SourceKind; 4] = [Self::Coal, Self::Oil, Self::NaturalGas, Self::Cement];
    /// Combustible fuels; everything except cement.
    pub const FUELS: [SourceKind; 3] = [Self::Coal, Self::Oil, Self::NaturalGas];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Coal => "coal",
            Self::Oil => "oil",
            Self::NaturalGas => "natural_gas",
            Self::Cement => "cement",
        }
    }

    pub fn is_fuel(&self) -> bool {
        !matches!(self, Self::Cement)
    }

    /// Physical unit flows of this source are recorded in.
    pub fn native_unit(&self) -> Unit {
        match self {
            Self::NaturalGas => Unit::CubicMetre,
            _ => Unit::Tonne,
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coal" => Ok(Self::Coal),
            "oil" => Ok(Self::Oil),
            "natural_gas" | "gas" => Ok(Self::NaturalGas),
            "cement" => Ok(Self::Cement),
            other => Err(Error::Domain(format!("unknown source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Tonne,
    CubicMetre,
    Terajoule,
    TonneCo2,
    TonneCarbon,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tonne => "t",
            Self::CubicMetre => "m3",
            Self::Terajoule => "TJ",
            Self::TonneCo2 => "tCO2",
            Self::TonneCarbon => "tC",
        })
    }
}

/// A finite magnitude tagged with its unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    magnitude: f64,
    unit: Unit,
}

impl Quantity {
    pub fn new(magnitude: f64, unit: Unit) -> Result<Self> {
        if !magnitude.is_finite() {
            return Err(Error::Domain(format!("non-finite magnitude {magnitude}")));
        }
        Ok(Self { magnitude, unit })
    }

    pub fn zero(unit: Unit) -> Self {
        Self {
            magnitude: 0.0,
            unit,
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    fn same_unit(&self, other: &Self) -> Result<()> {
        if self.unit != other.unit {
            return Err(Error::UnitMismatch {
                expected: self.unit,
                found: other.unit,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.same_unit(other)?;
        Self::new(self.magnitude + other.magnitude, self.unit)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.same_unit(other)?;
        Self::new(self.magnitude - other.magnitude, self.unit)
    }

    pub fn scale(&self, k: f64) -> Result<Self> {
        Self::new(self.magnitude * k, self.unit)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.magnitude, self.unit)
    }
}

/// One period's mass-balance inputs for one source.
///
/// `stock_change > 0` means inventories were built up during the period,
/// which reduces apparent consumption.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub period: Period,
    pub source: SourceKind,
    pub production: Quantity,
    pub import: Quantity,
    pub export: Quantity,
    pub stock_change: Quantity,
    pub non_energy_use: Quantity,
    pub sector: String,
}

impl FlowRecord {
    /// Builds a national record from raw magnitudes in the source's native
    /// unit. Does not validate.
    pub fn from_native(
        period: Period,
        source: SourceKind,
        [production, import, export, stock_change, non_energy_use]: [f64; 5],
    ) -> Result<Self> {
        let unit = source.native_unit();
        Ok(Self {
            period,
            source,
            production: Quantity::new(production, unit)?,
            import: Quantity::new(import, unit)?,
            export: Quantity::new(export, unit)?,
            stock_change: Quantity::new(stock_change, unit)?,
            non_energy_use: Quantity::new(non_energy_use, unit)?,
            sector: NATIONAL.to_string(),
        })
    }

    /// Cement record: production only.
    pub fn cement(period: Period, production_t: f64) -> Result<Self> {
        Self::from_native(
            period,
            SourceKind::Cement,
            [production_t, 0.0, 0.0, 0.0, 0.0],
        )
    }

    pub fn with_sector(mut self, sector: impl Into<String>) -> Self {
        self.sector = sector.into();
        self
    }

    pub fn fields(&self) -> [(&'static str, &Quantity); 5] {
        [
            ("production", &self.production),
            ("import", &self.import),
            ("export", &self.export),
            ("stock_change", &self.stock_change),
            ("non_energy_use", &self.non_energy_use),
        ]
    }

    /// Field-wise sum with another record of the same source; the period and
    /// sector of `self` are kept.
    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.source != other.source {
            return Err(Error::Domain(format!(
                "cannot add {} record to {} record",
                other.source, self.source
            )));
        }
        Ok(Self {
            period: self.period,
            source: self.source,
            production: self.production.try_add(&other.production)?,
            import: self.import.try_add(&other.import)?,
            export: self.export.try_add(&other.export)?,
            stock_change: self.stock_change.try_add(&other.stock_change)?,
            non_energy_use: self.non_energy_use.try_add(&other.non_energy_use)?,
            sector: self.sector.clone(),
        })
    }
}

/// Validates a record against the default year window.
pub fn validate_flow(record: FlowRecord) -> std::result::Result<FlowRecord, Vec<Violation>> {
    validate_flow_in(record, &YearWindow::default())
}

/// Returns the record unchanged iff every invariant holds, otherwise the
/// complete list of violations.
pub fn validate_flow_in(
    record: FlowRecord,
    window: &YearWindow,
) -> std::result::Result<FlowRecord, Vec<Violation>> {
    let mut errors = Vec::new();
    if !window.contains(record.period.year) {
        errors.push(Violation::new(
            "year",
            format!(
                "year {} outside [{}, {}]",
                record.period.year, window.first, window.last
            ),
        ));
    }
    if let Some(m) = record.period.month {
        if !(1..=12).contains(&m) {
            errors.push(Violation::new("month", format!("month {m} outside 1..=12")));
        }
    }
    let native = record.source.native_unit();
    for (name, q) in record.fields() {
        if q.unit() != native {
            errors.push(Violation::new(
                name,
                format!("unit mismatch: expected {native}, found {}", q.unit()),
            ));
        }
        if !q.magnitude().is_finite() {
            errors.push(Violation::new(name, format!("non-finite {name}")));
        }
        if name != "stock_change" && q.magnitude() < 0.0 {
            errors.push(Violation::new(name, format!("negative {name}")));
        }
    }
    if record.source == SourceKind::Cement {
        for (name, q) in record.fields().into_iter().skip(1) {
            if q.magnitude() != 0.0 {
                errors.push(Violation::new(
                    name,
                    format!("cement carries production only ({name} is nonzero)"),
                ));
            }
        }
    }
    if record.sector.trim().is_empty() {
        errors.push(Violation::new("sector", "empty sector tag"));
    }
    if errors.is_empty() {
        Ok(record)
    } else {
        Err(errors)
    }
}

/// Year-keyed values with a constant fallback for years not in the map.
#[derive(Debug, Clone, PartialEq)]
pub struct YearSeries {
    pub fallback: f64,
    pub by_year: BTreeMap<i32, f64>,
}

impl YearSeries {
    pub fn constant(value: f64) -> Self {
        Self {
            fallback: value,
            by_year: BTreeMap::new(),
        }
    }

    pub fn with_years(fallback: f64, by_year: impl IntoIterator<Item = (i32, f64)>) -> Self {
        Self {
            fallback,
            by_year: by_year.into_iter().collect(),
        }
    }

    pub fn get(&self, year: i32) -> f64 {
        match self.by_year.get(&year) {
            Some(v) => *v,
            None => {
                if !self.by_year.is_empty() {
                    log::debug!("no value for {year}; using fallback {}", self.fallback);
                }
                self.fallback
            }
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.fallback).chain(self.by_year.values().copied())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            fallback: f(self.fallback),
            by_year: self.by_year.iter().map(|(y, v)| (*y, f(*v))).collect(),
        }
    }
}

/// Heating values in GJ per native unit, per fuel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeatingValueSeries {
    series: BTreeMap<SourceKind, YearSeries>,
}

impl HeatingValueSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Coal at the measured constant, no other fuels.
    pub fn coal_default() -> Self {
        let mut hv = Self::new();
        hv.series.insert(
            SourceKind::Coal,
            YearSeries::constant(COAL_HEATING_VALUE_GJ_PER_T),
        );
        hv
    }

    pub fn set(&mut self, source: SourceKind, series: YearSeries) -> Result<()> {
        if !source.is_fuel() {
            return Err(Error::UnsupportedSource(source));
        }
        if series.values().any(|v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!(
                "heating values for {source} must be positive"
            )));
        }
        self.series.insert(source, series);
        Ok(())
    }

    pub fn series(&self, source: SourceKind) -> Option<&YearSeries> {
        self.series.get(&source)
    }

    /// GJ per native unit for `source` in `year`.
    pub fn lookup(&self, source: SourceKind, year: i32) -> Option<f64> {
        self.series.get(&source).map(|s| s.get(year))
    }
}

/// Converts a fuel quantity in its native unit to energy in TJ using the
/// heating value for `year`.
pub fn convert_unit(
    q: &Quantity,
    source: SourceKind,
    year: i32,
    hv: &HeatingValueSeries,
) -> Result<Quantity> {
    if !source.is_fuel() {
        return Err(Error::UnsupportedSource(source));
    }
    if q.unit() != source.native_unit() {
        return Err(Error::UnitMismatch {
            expected: source.native_unit(),
            found: q.unit(),
        });
    }
    let gj_per_unit = hv
        .lookup(source, year)
        .ok_or_else(|| Error::Config(format!("no heating value configured for {source}")))?;
    Quantity::new(q.magnitude() * gj_per_unit / 1000.0, Unit::Terajoule)
}

/// Carbon mass to CO₂ mass.
pub fn co2_from_carbon(q: &Quantity) -> Result<Quantity> {
    if q.unit() != Unit::TonneCarbon {
        return Err(Error::UnitMismatch {
            expected: Unit::TonneCarbon,
            found: q.unit(),
        });
    }
    if q.magnitude() < 0.0 {
        return Err(Error::Domain(format!(
            "negative carbon mass {}",
            q.magnitude()
        )));
    }
    Quantity::new(q.magnitude() * CO2_PER_C, Unit::TonneCo2)
}

/// Emission factors for one scenario.
///
/// Carbon content is tC/TJ, oxidation a fraction in (0, 1], cement factor
/// tC per tonne of cement. Oxidation may be year-keyed for sensitivity runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionFactorSet {
    pub scenario_name: String,
    pub heating_value: HeatingValueSeries,
    pub carbon_content: BTreeMap<SourceKind, f64>,
    pub oxidation: BTreeMap<SourceKind, YearSeries>,
    pub cement_factor: Option<f64>,
}

/// Factors for one fuel resolved for one year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedFactors {
    pub heating_value: f64,
    pub carbon_content: f64,
    pub oxidation: f64,
}

impl EmissionFactorSet {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            scenario_name: name.into(),
            heating_value: HeatingValueSeries::new(),
            carbon_content: BTreeMap::new(),
            oxidation: BTreeMap::new(),
            cement_factor: None,
        }
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Self {
            scenario_name: name.into(),
            ..self.clone()
        }
    }

    /// Sets constant factors for one fuel.
    pub fn with_fuel(
        mut self,
        source: SourceKind,
        heating_value: f64,
        carbon_content: f64,
        oxidation: f64,
    ) -> Result<Self> {
        self.heating_value
            .set(source, YearSeries::constant(heating_value))?;
        self.carbon_content.insert(source, carbon_content);
        self.oxidation
            .insert(source, YearSeries::constant(oxidation));
        self.validate()?;
        Ok(self)
    }

    pub fn with_cement_factor(mut self, tc_per_t: f64) -> Result<Self> {
        self.cement_factor = Some(tc_per_t);
        self.validate()?;
        Ok(self)
    }

    /// Checks every factor range; reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.scenario_name.trim().is_empty() {
            errors.push("scenario name is empty".to_string());
        }
        for (source, c) in &self.carbon_content {
            if !(c.is_finite() && *c > 0.0) {
                errors.push(format!("carbon content for {source} must be > 0 (got {c})"));
            }
        }
        for (source, series) in &self.oxidation {
            for o in series.values() {
                if !(o > 0.0 && o <= 1.0) {
                    errors.push(format!(
                        "oxidation for {source} must be in (0, 1] (got {o})"
                    ));
                }
            }
        }
        if let Some(f) = self.cement_factor {
            if !(f.is_finite() && f >= 0.0) {
                errors.push(format!("cement factor must be >= 0 (got {f})"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "scenario '{}': {}",
                self.scenario_name,
                errors.join("; ")
            )))
        }
    }

    fn missing(&self, factor: &'static str, source: SourceKind) -> Error {
        Error::MissingFactor {
            scenario: self.scenario_name.clone(),
            factor,
            fuel: source,
        }
    }

    pub fn resolve(&self, source: SourceKind, year: i32) -> Result<ResolvedFactors> {
        if !source.is_fuel() {
            return Err(Error::UnsupportedSource(source));
        }
        Ok(ResolvedFactors {
            heating_value: self
                .heating_value
                .lookup(source, year)
                .ok_or_else(|| self.missing("heating value", source))?,
            carbon_content: *self
                .carbon_content
                .get(&source)
                .ok_or_else(|| self.missing("carbon content", source))?,
            oxidation: self
                .oxidation
                .get(&source)
                .ok_or_else(|| self.missing("oxidation", source))?
                .get(year),
        })
    }

    pub fn cement_factor(&self) -> Result<f64> {
        self.cement_factor
            .ok_or_else(|| self.missing("cement factor", SourceKind::Cement))
    }
}
