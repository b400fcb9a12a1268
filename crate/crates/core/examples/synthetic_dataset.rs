//! Generates the bundled synthetic 2000–2018 dataset.
//!
//! ```text
//! cargo run -p carbonledger-core --example synthetic_dataset -- data/synthetic
//! ```
//!
//! The numbers are invented. Annual flows follow fixed growth paths shaped
//! like a large coal-dominated economy; each year is split into months with
//! a seasonal profile plus noise, and the annual rows are the exact sums of
//! the monthly rows. 2018 stops after October.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const FIRST: i32 = 2000;
const LAST: i32 = 2018;
const LAST_MONTH: u8 = 10;
const SEED: u64 = 20181205;

const SEASON: [f64; 12] = [
    0.078, 0.070, 0.083, 0.082, 0.084, 0.085, 0.084, 0.085, 0.085, 0.085, 0.087, 0.092,
];

struct Fuel {
    name: &'static str,
    /// Values in file units for 2000: production, import, export.
    base: [f64; 3],
    /// Percent growth for 2001..=2018.
    growth: [f64; 18],
    /// Annual stock change: mean and spread (file units).
    stock: (f64, f64),
    /// Non-energy use as a fraction of production.
    non_energy: f64,
    decimals: u32,
}

const FUELS: [Fuel; 3] = [
    Fuel {
        name: "coal",
        base: [1384.0, 2.2, 58.0],
        growth: [
            3.2, 9.1, 18.3, 15.4, 10.9, 9.0, 8.1, 3.4, 9.2, 6.1, 9.9, 2.6, 3.9, -2.9, -3.7, -1.6,
            0.4, 4.8,
        ],
        stock: (-5.0, 25.0),
        non_energy: 0.035,
        decimals: 2,
    },
    Fuel {
        name: "oil",
        base: [163.0, 97.5, 21.7],
        growth: [
            4.1, 6.8, 11.2, 15.9, 3.1, 7.2, 6.0, 4.1, 6.4, 12.2, 5.1, 5.2, 4.0, 5.9, 6.1, 3.3, 5.5,
            5.6,
        ],
        stock: (3.0, 6.0),
        non_energy: 0.11,
        decimals: 2,
    },
    Fuel {
        name: "gas",
        base: [27.2, 0.5, 3.1],
        growth: [
            10.3, 8.2, 14.9, 16.1, 20.2, 19.8, 19.6, 10.1, 8.8, 20.3, 19.9, 12.8, 13.1, 8.9, 5.2,
            7.9, 15.0, 17.4,
        ],
        stock: (0.0, 0.8),
        non_energy: 0.06,
        decimals: 3,
    },
];

const CEMENT_BASE: f64 = 597.0;
const CEMENT_GROWTH: [f64; 18] = [
    9.1, 14.2, 16.0, 12.4, 10.9, 15.3, 10.1, 5.0, 17.9, 15.1, 11.0, 7.4, 9.6, 1.8, -4.9, 2.3, -0.2,
    2.6,
];

/// Fixed-point amount in units of 10^-decimals.
fn fixed(v: f64, decimals: u32) -> i64 {
    (v * 10f64.powi(decimals as i32)).round() as i64
}

fn show(v: i64, decimals: u32) -> String {
    let scale = 10i64.pow(decimals);
    let sign = if v < 0 { "-" } else { "" };
    let a = v.abs();
    format!(
        "{sign}{}.{:0width$}",
        a / scale,
        a % scale,
        width = decimals as usize
    )
}

fn path_of(base: f64, growth: &[f64; 18]) -> Vec<f64> {
    let mut out = vec![base];
    for g in growth {
        out.push(out.last().unwrap() * (1.0 + g / 100.0));
    }
    out
}

/// Splits an annual total into months. `shock` moves November and December
/// together, so the full year differs from what the first ten months imply.
fn months(total: f64, shock: f64, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> [f64; 12] {
    std::array::from_fn(|m| {
        let late = if m >= 10 { 1.0 + shock } else { 1.0 };
        total * SEASON[m] * late * (1.0 + noise.sample(rng))
    })
}

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "data/synthetic".into()),
    );
    fs::create_dir_all(&dir).expect("create output directory");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let noise = Normal::new(0.0, 0.012).unwrap();
    let late_shock = Normal::new(0.0, 0.12).unwrap();

    let header = "year,month,source,production,import,export,stock_change,non_energy_use\n";
    let mut annual = String::from(header);
    let mut monthly = String::from(header);
    let years = (LAST - FIRST + 1) as usize;

    // Rows are buffered per (year, source) so both files come out sorted.
    let mut annual_rows: Vec<Vec<String>> = vec![Vec::new(); years];
    let mut monthly_rows: Vec<Vec<Vec<String>>> = vec![vec![Vec::new(); 12]; years];

    for fuel in &FUELS {
        let d = fuel.decimals;
        let paths: Vec<Vec<f64>> = fuel
            .base
            .iter()
            .map(|b| path_of(*b, &fuel.growth))
            .collect();
        let stock = Normal::new(fuel.stock.0, fuel.stock.1).unwrap();
        for (i, year) in (FIRST..=LAST).enumerate() {
            let shock = late_shock.sample(&mut rng);
            let flows: Vec<[i64; 12]> = paths
                .iter()
                .map(|p| months(p[i], shock, &mut rng, &noise).map(|v| fixed(v, d)))
                .collect();
            let stock_year = fixed(stock.sample(&mut rng), d);
            let sums: Vec<i64> = flows.iter().map(|f| f.iter().sum()).collect();
            let non_energy = fixed(sums[0] as f64 / 10f64.powi(d as i32) * fuel.non_energy, d);
            let last_month = if year == LAST { LAST_MONTH } else { 12 };
            for m in 0..last_month as usize {
                monthly_rows[i][m].push(format!(
                    "{year},{},{},{},{},{},0,0\n",
                    m + 1,
                    fuel.name,
                    show(flows[0][m], d),
                    show(flows[1][m], d),
                    show(flows[2][m], d),
                ));
            }
            if year < LAST {
                annual_rows[i].push(format!(
                    "{year},,{},{},{},{},{},{}\n",
                    fuel.name,
                    show(sums[0], d),
                    show(sums[1], d),
                    show(sums[2], d),
                    show(stock_year, d),
                    show(non_energy, d),
                ));
            }
        }
    }

    let cement = path_of(CEMENT_BASE, &CEMENT_GROWTH);
    for (i, year) in (FIRST..=LAST).enumerate() {
        let shock = late_shock.sample(&mut rng);
        let split = months(cement[i], shock, &mut rng, &noise).map(|v| fixed(v, 2));
        let last_month = if year == LAST { LAST_MONTH } else { 12 };
        for m in 0..last_month as usize {
            monthly_rows[i][m].push(format!(
                "{year},{},cement,{},0,0,0,0\n",
                m + 1,
                show(split[m], 2)
            ));
        }
        if year < LAST {
            let total: i64 = split.iter().sum();
            annual_rows[i].push(format!("{year},,cement,{},0,0,0,0\n", show(total, 2)));
        }
    }

    for rows in annual_rows {
        annual.extend(rows);
    }
    for year in monthly_rows {
        for rows in year {
            monthly.extend(rows);
        }
    }

    let mut gdp = String::from("year,gdp_index,secondary_share\n");
    let gdp_growth = [
        8.3, 9.1, 10.0, 10.1, 11.4, 12.7, 14.2, 9.7, 9.4, 10.6, 9.5, 7.9, 7.8, 7.3, 6.9, 6.7, 6.9,
        6.6,
    ];
    let mut index = 100.0;
    for (i, year) in (FIRST..=LAST).enumerate() {
        if i > 0 {
            index *= 1.0 + gdp_growth[i - 1] / 100.0;
        }
        let share = 0.455 - 0.004 * i as f64;
        writeln!(gdp, "{year},{index:.2},{share:.3}").unwrap();
    }

    let mut products = String::from("year,month,product,output\n");
    let product_base = [
        ("crude_steel", 62.0, [6.5, 3.1]),
        ("plate_glass", 68.0, [3.6, 2.1]),
    ];
    for year in 2016..=LAST {
        for m in 1..=12u8 {
            if year == LAST && m > LAST_MONTH {
                break;
            }
            for (name, base, growth) in &product_base {
                let mut level = *base;
                if year >= 2017 {
                    level *= 1.0 + growth[0] / 100.0;
                }
                if year >= 2018 {
                    level *= 1.0 + growth[1] / 100.0;
                }
                let v = level * SEASON[m as usize - 1] * 12.0 * (1.0 + noise.sample(&mut rng));
                writeln!(products, "{year},{m},{name},{v:.2}").unwrap();
            }
        }
    }

    for (name, body) in [
        ("flows.csv", annual),
        ("monthly.csv", monthly),
        ("gdp.csv", gdp),
        ("products.csv", products),
    ] {
        fs::write(dir.join(name), body).expect("write dataset file");
    }
}
