use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use crate::domain::{validate_flow, FlowRecord, Period, SourceKind, NATIONAL};
use crate::error::{Error, IngestError, Result};
use crate::ingest::{Dataset, FlowKey};

pub const FLOWS_HEADER: [&str; 9] = [
    "year",
    "month",
    "source",
    "production",
    "import",
    "export",
    "stock_change",
    "non_energy_use",
    "sector",
];

const FLOW_FIELDS: [&str; 5] = [
    "production",
    "import",
    "export",
    "stock_change",
    "non_energy_use",
];

/// Decimal exponent between the file unit and the native unit: flows are
/// written in 10⁶ t (coal, oil, cement) and 10⁹ m³ (gas).
fn file_exponent(source: SourceKind) -> i32 {
    match source {
        SourceKind::NaturalGas => 9,
        _ => 6,
    }
}

/// Parses a decimal string and shifts it by `exp` powers of ten in the
/// decimal domain, so scaling introduces no extra rounding.
fn parse_scaled(s: &str, exp: i32) -> Option<f64> {
    let s = s.trim();
    if s.is_empty()
        || s.chars()
            .any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
    {
        return None;
    }
    let (mantissa, e) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let v: f64 = format!("{mantissa}e{}", e + exp).parse().ok()?;
    v.is_finite().then_some(v)
}

/// Formats `value × 10^-exp` as a plain decimal using the shortest
/// round-trip digits of `value`.
fn format_scaled(value: f64, exp: i32) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{value:e}");
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let e = e.parse::<i32>().expect("exponent") - exp;
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    // Decimal point sits after `point` digits.
    let point = e + 1;
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-point) as usize));
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', point as usize - digits.len()));
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    out
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Self {
            index: headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_string(), i))
                .collect(),
        }
    }

    fn get<'a>(&self, row: &'a csv::StringRecord, name: &str) -> Option<&'a str> {
        self.index
            .get(name)
            .and_then(|i| row.get(*i))
            .map(str::trim)
    }

    fn missing(&self, required: &[&str]) -> Vec<String> {
        required
            .iter()
            .filter(|c| !self.index.contains_key(**c))
            .map(|c| c.to_string())
            .collect()
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

struct Errors<'a> {
    origin: &'a str,
    list: Vec<IngestError>,
}

impl<'a> Errors<'a> {
    fn new(origin: &'a str) -> Self {
        Self {
            origin,
            list: Vec::new(),
        }
    }

    fn push(&mut self, line: u64, column: Option<&str>, message: impl Into<String>) {
        self.list.push(IngestError {
            origin: self.origin.to_string(),
            line,
            column: column.map(str::to_string),
            message: message.into(),
        });
    }

    fn finish<T>(self, value: T) -> Result<T> {
        if self.list.is_empty() {
            Ok(value)
        } else {
            Err(Error::Ingest(self.list))
        }
    }
}

fn header_checks(
    rdr: &mut csv::Reader<impl Read>,
    errors: &mut Errors,
    required: &[&str],
    optional: &[&str],
) -> Option<Columns> {
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            errors.push(1, None, format!("unreadable header: {e}"));
            return None;
        }
    };
    if headers.iter().all(|h| h.is_empty()) {
        errors.push(1, None, "missing header row");
        return None;
    }
    let cols = Columns::new(&headers);
    for c in cols.missing(required) {
        errors.push(1, Some(&c), format!("missing required column '{c}'"));
    }
    for h in headers.iter() {
        if !required.contains(&h) && !optional.contains(&h) {
            errors.push(1, Some(h), format!("unknown column '{h}'"));
        }
    }
    errors.list.is_empty().then_some(cols)
}

fn parse_year(raw: Option<&str>, line: u64, errors: &mut Errors) -> Option<i32> {
    match raw.map(str::parse::<i32>) {
        Some(Ok(y)) => Some(y),
        _ => {
            errors.push(
                line,
                Some("year"),
                format!("malformed year '{}'", raw.unwrap_or("")),
            );
            None
        }
    }
}

fn parse_month(raw: Option<&str>, line: u64, errors: &mut Errors) -> Option<Option<u8>> {
    match raw {
        None | Some("") => Some(None),
        Some(s) => match s.parse::<u8>() {
            Ok(m) if (1..=12).contains(&m) => Some(Some(m)),
            _ => {
                errors.push(line, Some("month"), format!("malformed month '{s}'"));
                None
            }
        },
    }
}

/// Parses a flows CSV. Every error carries its line and column; parsing
/// continues past bad rows so all problems are reported together.
///
/// The result may be a fragment (a single month, say). Cross-row rules such
/// as contiguous monthly prefixes are checked by [`Dataset::check_invariants`]
/// once all fragments are merged.
pub fn parse_flows_csv<R: Read>(input: R, origin: &str) -> Result<Dataset> {
    let mut errors = Errors::new(origin);
    let mut rdr = reader(input);
    let Some(cols) = header_checks(
        &mut rdr,
        &mut errors,
        &FLOWS_HEADER[..7],
        &["non_energy_use", "sector"],
    ) else {
        return errors.finish(Dataset::new());
    };
    if !cols.index.contains_key("non_energy_use") {
        log::warn!("{origin}: no non_energy_use column; assuming 0");
    }

    let mut ds = Dataset::new();
    let mut lines: BTreeMap<FlowKey, u64> = BTreeMap::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                errors.push(line, None, format!("malformed row: {e}"));
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let year = parse_year(cols.get(&row, "year"), line, &mut errors);
        let month = parse_month(cols.get(&row, "month"), line, &mut errors);
        let source = match cols.get(&row, "source").unwrap_or("").parse::<SourceKind>() {
            Ok(s) => Some(s),
            Err(_) => {
                errors.push(
                    line,
                    Some("source"),
                    format!(
                        "unknown source '{}' at line {line}",
                        cols.get(&row, "source").unwrap_or("")
                    ),
                );
                None
            }
        };
        let exp = source.map_or(6, file_exponent);
        let mut values = [0.0; 5];
        let mut ok = true;
        for (slot, name) in values.iter_mut().zip(FLOW_FIELDS) {
            match cols.get(&row, name) {
                None | Some("") if name == "non_energy_use" => {}
                raw => match raw.and_then(|s| parse_scaled(s, exp)) {
                    Some(v) => *slot = v,
                    None => {
                        errors.push(
                            line,
                            Some(name),
                            format!("malformed number '{}'", raw.unwrap_or("")),
                        );
                        ok = false;
                    }
                },
            }
        }
        let (Some(year), Some(month), Some(source), true) = (year, month, source, ok) else {
            continue;
        };
        let period = Period { year, month };
        let sector = match cols.get(&row, "sector") {
            None | Some("") => NATIONAL.to_string(),
            Some(s) => s.to_string(),
        };
        let record = match FlowRecord::from_native(period, source, values) {
            Ok(r) => r.with_sector(sector),
            Err(e) => {
                errors.push(line, None, e.to_string());
                continue;
            }
        };
        let record = match validate_flow(record) {
            Ok(r) => r,
            Err(violations) => {
                for v in violations {
                    errors.push(line, Some(v.field), v.message);
                }
                continue;
            }
        };
        let key = FlowKey::of(&record);
        if let Some(first) = lines.get(&key) {
            errors.push(
                line,
                None,
                format!(
                    "duplicate key ({}, {}, {}) first seen at line {first}",
                    record.period, record.source, record.sector
                ),
            );
            continue;
        }
        lines.insert(key, line);
        ds.insert(record);
    }
    errors.finish(ds)
}

/// Writes all flow records in canonical (period, source, sector) order.
pub fn write_flows_csv<W: Write>(dataset: &Dataset, output: W) -> Result<()> {
    let io = |e: csv::Error| Error::Domain(format!("write failed: {e}"));
    let mut w = csv::Writer::from_writer(output);
    w.write_record(FLOWS_HEADER).map_err(io)?;
    for r in dataset.records() {
        let exp = file_exponent(r.source);
        let mut row = vec![
            r.period.year.to_string(),
            r.period.month.map(|m| m.to_string()).unwrap_or_default(),
            r.source.to_string(),
        ];
        row.extend(
            r.fields()
                .iter()
                .map(|(_, q)| format_scaled(q.magnitude(), exp)),
        );
        row.push(r.sector.clone());
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Domain(format!("write failed: {e}")))
}

/// Parses `year,gdp_index,secondary_share`; the share may be blank.
pub fn parse_gdp_csv<R: Read>(input: R, origin: &str) -> Result<Dataset> {
    let mut errors = Errors::new(origin);
    let mut rdr = reader(input);
    let Some(cols) = header_checks(
        &mut rdr,
        &mut errors,
        &["year", "gdp_index"],
        &["secondary_share"],
    ) else {
        return errors.finish(Dataset::new());
    };
    let mut ds = Dataset::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(e.position().map_or(0, |p| p.line()), None, e.to_string());
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let Some(year) = parse_year(cols.get(&row, "year"), line, &mut errors) else {
            continue;
        };
        match cols.get(&row, "gdp_index").and_then(|s| parse_scaled(s, 0)) {
            Some(g) if g > 0.0 => {
                if ds.gdp.insert(year, g).is_some() {
                    errors.push(line, Some("year"), format!("duplicate year {year}"));
                }
            }
            _ => errors.push(
                line,
                Some("gdp_index"),
                "gdp_index must be a positive number",
            ),
        }
        match cols.get(&row, "secondary_share") {
            None | Some("") => {}
            Some(s) => match parse_scaled(s, 0) {
                Some(v) if (0.0..=1.0).contains(&v) => {
                    ds.secondary_share.insert(year, v);
                }
                _ => errors.push(line, Some("secondary_share"), "share must be in [0, 1]"),
            },
        }
    }
    errors.finish(ds)
}

/// Parses `year,month,product,output`; a blank month means annual output.
pub fn parse_products_csv<R: Read>(input: R, origin: &str) -> Result<Dataset> {
    let mut errors = Errors::new(origin);
    let mut rdr = reader(input);
    let Some(cols) = header_checks(
        &mut rdr,
        &mut errors,
        &["year", "month", "product", "output"],
        &[],
    ) else {
        return errors.finish(Dataset::new());
    };
    let mut ds = Dataset::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(e.position().map_or(0, |p| p.line()), None, e.to_string());
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let year = parse_year(cols.get(&row, "year"), line, &mut errors);
        let month = parse_month(cols.get(&row, "month"), line, &mut errors);
        let product = cols.get(&row, "product").unwrap_or("").to_string();
        if product.is_empty() {
            errors.push(line, Some("product"), "empty product name");
        }
        let output = match cols.get(&row, "output").and_then(|s| parse_scaled(s, 0)) {
            Some(v) if v >= 0.0 => Some(v),
            _ => {
                errors.push(line, Some("output"), "output must be a nonnegative number");
                None
            }
        };
        if let (Some(year), Some(month), Some(output), false) =
            (year, month, output, product.is_empty())
        {
            let key = (product, Period { year, month });
            if ds.industrial_products.insert(key, output).is_some() {
                errors.push(line, None, "duplicate (product, period)");
            }
        }
    }
    errors.finish(ds)
}
