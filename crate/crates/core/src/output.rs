//! Output tables and number formatting.
//!
//! Numbers are rounded once, here, to [`SIGNIFICANT_DIGITS`] significant
//! digits. Emissions are reported in MtCO₂.

use std::io::{Read, Write};

use crate::domain::SourceKind;
use crate::emission::{Comparison, EmissionEstimate};
use crate::error::{Error, Result};
use crate::nowcast::{GrowthProjection, Projection};
use crate::uncertainty::{Contribution, UncertaintyResult};

pub const SIGNIFICANT_DIGITS: usize = 6;

pub const EMISSIONS_HEADER: [&str; 7] = [
    "year",
    "scenario",
    "source",
    "energy_TJ",
    "emissions_MtCO2",
    "lo68_MtCO2",
    "hi68_MtCO2",
];
pub const UNCERTAINTY_HEADER: [&str; 7] = [
    "year",
    "scenario",
    "central_MtCO2",
    "lo68",
    "hi68",
    "draws",
    "seed",
];
pub const CONTRIBUTIONS_HEADER: [&str; 3] = ["factor", "source", "share_percent"];
pub const PROJECTION_HEADER: [&str; 5] = [
    "source",
    "basis_months",
    "growth_central_pct",
    "lo68_pct",
    "hi68_pct",
];
pub const COMPARISON_HEADER: [&str; 5] = [
    "year",
    "scenario",
    "source",
    "emissions_MtCO2",
    "deviation_pct",
];

/// Label used for the all-source row.
pub const TOTAL: &str = "total";

const T_PER_MT: f64 = 1e6;

/// Rounds to `digits` significant digits and prints as a plain decimal.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() {
            "0".into()
        } else {
            x.to_string()
        };
    }
    let rounded: f64 = format!("{:.*e}", digits - 1, x).parse().expect("float");
    let magnitude = rounded.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn fmt6(x: f64) -> String {
    fmt_sig(x, SIGNIFICANT_DIGITS)
}

/// `+5.5% (2.5%–8.5%)`, one decimal.
pub fn format_growth(p: &Projection) -> String {
    format!("{:+.1}% ({:.1}%–{:.1}%)", p.central, p.lo, p.hi)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Domain(format!("csv write failed: {e}"))
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()
        .map_err(|e| Error::Domain(format!("write failed: {e}")))
}

pub fn write_emissions_csv<W: Write>(estimates: &[EmissionEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EMISSIONS_HEADER).map_err(csv_err)?;
    let mt = |t: f64| fmt6(t / T_PER_MT);
    for e in estimates {
        for (source, q) in &e.per_source {
            let energy = e
                .energy
                .get(source)
                .map(|q| fmt6(q.magnitude()))
                .unwrap_or_default();
            w.write_record([
                e.year.to_string(),
                e.scenario_name.clone(),
                source.to_string(),
                energy,
                mt(q.magnitude()),
                String::new(),
                String::new(),
            ])
            .map_err(csv_err)?;
        }
        let energy: f64 = e.energy.values().map(|q| q.magnitude()).sum();
        let (lo, hi) = e
            .band
            .map(|(lo, hi)| (mt(lo.magnitude()), mt(hi.magnitude())))
            .unwrap_or_default();
        w.write_record([
            e.year.to_string(),
            e.scenario_name.clone(),
            TOTAL.to_string(),
            fmt6(energy),
            mt(e.total.magnitude()),
            lo,
            hi,
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// One parsed row of an emissions CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionsRow {
    pub year: i32,
    pub scenario: String,
    /// `None` for the total row.
    pub source: Option<SourceKind>,
    pub energy_tj: Option<f64>,
    pub emissions_mt: f64,
    pub lo68_mt: Option<f64>,
    pub hi68_mt: Option<f64>,
}

/// Reads an emissions CSV written by [`write_emissions_csv`].
pub fn read_emissions_csv<R: Read>(input: R, origin: &str) -> Result<Vec<EmissionsRow>> {
    let bad = |line: u64, msg: String| Error::Domain(format!("{origin}:{line}: {msg}"));
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != EMISSIONS_HEADER {
        return Err(bad(1, "not an emissions table (unexpected header)".into()));
    }
    let opt = |s: &str, line: u64| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| bad(line, format!("malformed number '{s}'")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let source = match &rec[2] {
            TOTAL => None,
            s => Some(
                s.parse()
                    .map_err(|_| bad(line, format!("unknown source '{s}'")))?,
            ),
        };
        rows.push(EmissionsRow {
            year: rec[0]
                .parse()
                .map_err(|_| bad(line, "malformed year".into()))?,
            scenario: rec[1].to_string(),
            source,
            energy_tj: opt(&rec[3], line)?,
            emissions_mt: opt(&rec[4], line)?
                .ok_or_else(|| bad(line, "missing emissions".into()))?,
            lo68_mt: opt(&rec[5], line)?,
            hi68_mt: opt(&rec[6], line)?,
        });
    }
    Ok(rows)
}

pub fn write_uncertainty_csv<W: Write>(results: &[UncertaintyResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(UNCERTAINTY_HEADER).map_err(csv_err)?;
    for r in results {
        let band = r.band()?;
        w.write_record([
            r.year.to_string(),
            r.scenario_name.clone(),
            fmt6(r.central.magnitude() / T_PER_MT),
            fmt6(band.lo68.magnitude() / T_PER_MT),
            fmt6(band.hi68.magnitude() / T_PER_MT),
            r.draws_used.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Contributions in the order given (callers pass them largest first).
pub fn write_contributions_csv<W: Write>(contributions: &[Contribution], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONTRIBUTIONS_HEADER).map_err(csv_err)?;
    for c in contributions {
        w.write_record([c.kind.to_string(), c.source.to_string(), fmt6(c.share_pct)])
            .map_err(csv_err)?;
    }
    finish(w)
}

/// Per-source rows in source order, then the total row.
pub fn write_projection_csv<W: Write>(projections: &[GrowthProjection], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROJECTION_HEADER).map_err(csv_err)?;
    for g in projections {
        let rows = g
            .per_source
            .iter()
            .map(|(s, p)| (s.to_string(), p))
            .chain(std::iter::once((TOTAL.to_string(), &g.total)));
        for (label, p) in rows {
            w.write_record([
                label,
                g.basis_months.to_string(),
                fmt6(p.central),
                fmt6(p.lo),
                fmt6(p.hi),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

pub fn write_comparison_csv<W: Write>(cmp: &Comparison, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_HEADER).map_err(csv_err)?;
    let dev = |d: Option<f64>| d.map(fmt6).unwrap_or_default();
    for row in &cmp.rows {
        let e = &row.estimate;
        for (s, q) in &e.per_source {
            w.write_record([
                e.year.to_string(),
                e.scenario_name.clone(),
                s.to_string(),
                fmt6(q.magnitude() / T_PER_MT),
                dev(row.source_deviation_pct.get(s).copied()),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            e.year.to_string(),
            e.scenario_name.clone(),
            TOTAL.to_string(),
            fmt6(e.total.magnitude() / T_PER_MT),
            dev(row.total_deviation_pct),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt6(1.879150), "1.87915");
        assert_eq!(fmt6(80_091_850.0), "80091800");
        assert_eq!(fmt6(0.000123456789), "0.000123457");
        assert_eq!(fmt6(-4.5), "-4.5");
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(999_999.6), "1000000");
        assert_eq!(fmt6(100.0), "100");
    }

    #[test]
    fn growth_format() {
        let p = Projection {
            central: 5.5,
            lo: 2.5,
            hi: 8.5,
        };
        assert_eq!(format_growth(&p), "+5.5% (2.5%–8.5%)");
        let n = Projection {
            central: -0.04,
            lo: -1.94,
            hi: 1.86,
        };
        assert_eq!(format_growth(&n), "-0.0% (-1.9%–1.9%)");
    }
}
