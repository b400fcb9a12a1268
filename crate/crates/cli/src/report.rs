//! `report`: tables derived from earlier outputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};

use anyhow::{anyhow, Context, Result};
use carbonledger::balance::driver_growth;
use carbonledger::domain::{Quantity, SourceKind, Unit};
use carbonledger::emission::{intensity_indicators, total_growth, EmissionEstimate};
use carbonledger::ingest::Dataset;
use carbonledger::output::{fmt6, read_emissions_csv, EmissionsRow, TOTAL};

use crate::commands::Usage;
use crate::files::{load_dataset, write_atomic, Inputs};
use crate::manifest::RunManifest;
use crate::table::Table;
use crate::{Format, ReportArgs, ReportTable};

const T_PER_MT: f64 = 1e6;

/// Rebuilds per-scenario estimates from emissions rows, ordered by year.
fn estimates(rows: &[EmissionsRow]) -> Result<BTreeMap<String, Vec<EmissionEstimate>>> {
    let mut grouped: BTreeMap<(String, i32), Vec<&EmissionsRow>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry((r.scenario.clone(), r.year))
            .or_default()
            .push(r);
    }
    let mut out: BTreeMap<String, Vec<EmissionEstimate>> = BTreeMap::new();
    for ((scenario, year), rows) in grouped {
        let mut per_source = BTreeMap::new();
        let mut energy = BTreeMap::new();
        let mut total = None;
        for r in rows {
            let co2 = Quantity::new(r.emissions_mt * T_PER_MT, Unit::TonneCo2)?;
            match r.source {
                Some(s) => {
                    per_source.insert(s, co2);
                    if let (true, Some(tj)) = (s.is_fuel(), r.energy_tj) {
                        energy.insert(s, Quantity::new(tj, Unit::Terajoule)?);
                    }
                }
                None => total = Some(co2),
            }
        }
        let total = total.ok_or_else(|| anyhow!("{scenario} {year}: no total row"))?;
        out.entry(scenario.clone())
            .or_default()
            .push(EmissionEstimate {
                year,
                scenario_name: scenario,
                per_source,
                energy,
                total,
                band: None,
            });
    }
    Ok(out)
}

fn yoy(prev: Option<f64>, now: f64) -> String {
    match prev {
        Some(p) if p > 0.0 => fmt6(100.0 * (now - p) / p),
        _ => String::new(),
    }
}

fn growth_table(by_scenario: &BTreeMap<String, Vec<EmissionEstimate>>) -> Table {
    let mut t = Table::new([
        "year",
        "scenario",
        "source",
        "emissions_MtCO2",
        "yoy_growth_pct",
    ])
    .titled("Emissions and year-on-year growth");
    for (scenario, list) in by_scenario {
        let mut prev: BTreeMap<Option<SourceKind>, (i32, f64)> = BTreeMap::new();
        for e in list {
            let cells = e
                .per_source
                .iter()
                .map(|(s, q)| (Some(*s), q.magnitude()))
                .chain(std::iter::once((None, e.total.magnitude())));
            for (source, value) in cells {
                let before = prev
                    .get(&source)
                    .filter(|(y, _)| *y == e.year - 1)
                    .map(|(_, v)| *v);
                t.push([
                    e.year.to_string(),
                    scenario.clone(),
                    source.map_or(TOTAL.to_string(), |s| s.to_string()),
                    fmt6(value / T_PER_MT),
                    yoy(before, value),
                ]);
                prev.insert(source, (e.year, value));
            }
        }
    }
    t
}

fn intensity_table(
    by_scenario: &BTreeMap<String, Vec<EmissionEstimate>>,
    ds: &Dataset,
) -> Result<Table> {
    let mut t = Table::new([
        "year",
        "scenario",
        "emissions_MtCO2",
        "emissions_growth_pct",
        "gdp_index",
        "co2_per_gdp_MtCO2",
        "co2_per_gdp_growth_pct",
        "coal_share_energy",
        "secondary_share",
    ])
    .titled("Emission intensity (CO2/GDP) and structure");
    for (scenario, list) in by_scenario {
        let indicators = intensity_indicators(list, ds)?;
        let growth: BTreeMap<i32, f64> = total_growth(list).into_iter().collect();
        let mut prev: Option<(i32, f64)> = None;
        for e in list {
            let ind = &indicators[&e.year];
            let intensity = ind.co2_intensity / T_PER_MT;
            let before = prev.filter(|(y, _)| *y == e.year - 1).map(|(_, v)| v);
            t.push([
                e.year.to_string(),
                scenario.clone(),
                fmt6(e.total.magnitude() / T_PER_MT),
                growth.get(&e.year).map(|g| fmt6(*g)).unwrap_or_default(),
                fmt6(ds.gdp[&e.year]),
                fmt6(intensity),
                yoy(before, intensity),
                fmt6(ind.coal_share_energy),
                ind.secondary_share.map(fmt6).unwrap_or_default(),
            ]);
            prev = Some((e.year, intensity));
        }
    }
    Ok(t)
}

fn drivers_table(ds: &Dataset, year: Option<i32>, months: Option<u8>) -> Result<Table> {
    let year = year
        .or_else(|| ds.industrial_products.keys().map(|(_, p)| p.year).max())
        .ok_or_else(|| anyhow!("products table is empty"))?;
    let months = match months {
        Some(m) => m,
        None => ds
            .industrial_products
            .keys()
            .filter(|(_, p)| p.year == year)
            .filter_map(|(_, p)| p.month)
            .max()
            .ok_or_else(|| anyhow!("no monthly product output for {year}"))?,
    };
    let mut products: Vec<&str> = ds
        .industrial_products
        .keys()
        .map(|(name, _)| name.as_str())
        .collect();
    products.dedup();
    let mut t = Table::new(["product", "year", "basis_months", "growth_pct"]).titled(format!(
        "Industrial output growth, first {months} months of {year}"
    ));
    for p in products {
        let g = driver_growth(ds, p, year, months).with_context(|| format!("product '{p}'"))?;
        t.push([
            p.to_string(),
            year.to_string(),
            months.to_string(),
            fmt6(g.rate_pct),
        ]);
    }
    Ok(t)
}

pub fn run(a: ReportArgs) -> Result<()> {
    let mut m = RunManifest::new("report");
    let mut rows = Vec::new();
    for path in &a.input {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        rows.extend(read_emissions_csv(
            BufReader::new(file),
            &path.display().to_string(),
        )?);
        m.input(path)?;
    }
    let need_input = || -> Result<()> {
        if a.input.is_empty() {
            return Err(Usage("this table needs --in <emissions.csv>".into()).into());
        }
        Ok(())
    };
    let table = match a.table {
        ReportTable::Growth => {
            need_input()?;
            growth_table(&estimates(&rows)?)
        }
        ReportTable::Intensity => {
            need_input()?;
            let gdp = a
                .gdp
                .as_deref()
                .ok_or_else(|| Usage("the intensity table needs --gdp".into()))?;
            let ds = load_dataset(
                &Inputs {
                    gdp: Some(gdp),
                    ..Inputs::default()
                },
                &mut m,
            )?;
            intensity_table(&estimates(&rows)?, &ds)?
        }
        ReportTable::Drivers => {
            let products = a
                .products
                .as_deref()
                .ok_or_else(|| Usage("the drivers table needs --products".into()))?;
            let ds = load_dataset(
                &Inputs {
                    products: Some(products),
                    ..Inputs::default()
                },
                &mut m,
            )?;
            drivers_table(&ds, a.year, a.months)?
        }
    };
    let bytes = match a.format {
        Format::Csv => table.to_csv()?,
        Format::Text => table.to_text().into_bytes(),
    };
    match &a.out {
        Some(path) => {
            write_atomic(path, &bytes)?;
            m.output(path)?;
            m.write_beside(path)?;
        }
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}
