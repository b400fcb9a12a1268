//! Scenario configuration (TOML) and the built-in coal factor presets.
//!
//! ```toml
//! default_scenario = "this-study"
//!
//! [common]                      # applied to every scenario first
//! heating_value.oil = 41.8      # GJ per native unit
//! carbon_content.oil = 20.08    # tC/TJ
//! oxidation.oil = 0.98
//! cement_factor = 0.0793        # tC per t cement
//!
//! [scenario.this-study]
//! preset = "this-study"         # coal factors from a preset
//! heating_value.coal = { fallback = 20.95, 2012 = 20.95, 2013 = 21.1 }
//!
//! [uncertainty]
//! draws = 10000
//! seed = 42
//! sigma.production = 0.02               # every fuel
//! sigma.carbon_content.coal = 0.003     # one fuel
//! stock_sigma.coal = "history"          # or a number, in file units
//! ```
//!
//! A scenario name that is not declared but matches a preset resolves to
//! `[common]` plus that preset.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Deserialize;

use crate::domain::{EmissionFactorSet, SourceKind, YearSeries};
use crate::error::{Error, Result};
use crate::uncertainty::{InputKind, StockSigma, UncertaintySpec};

pub const PRESET_NAMES: [&str; 10] = [
    "this-study",
    "UNFCCC-CN",
    "CDIAC",
    "IEA",
    "EDGAR",
    "BP",
    "EIA",
    "WorldBank",
    "UN-HV",
    "IPCC-default",
];

const STUDY_COAL: (f64, f64, f64) = (20.95, 26.59, 0.92);

/// Coal-only factor set for a named preset. Other fuels and the cement
/// factor have no preset values and must come from configuration.
pub fn preset(name: &str) -> Option<EmissionFactorSet> {
    let canonical = PRESET_NAMES.iter().find(|p| p.eq_ignore_ascii_case(name))?;
    let (mut v, mut c, mut o) = STUDY_COAL;
    match *canonical {
        "this-study" => {}
        "UNFCCC-CN" => o = 0.94,
        "CDIAC" | "IEA" => o = 0.98,
        "EDGAR" | "BP" | "EIA" | "WorldBank" => o = 1.00,
        "UN-HV" => v = 21.4,
        "IPCC-default" => c = 25.9,
        _ => unreachable!(),
    }
    EmissionFactorSet::new(*canonical)
        .with_fuel(SourceKind::Coal, v, c, o)
        .ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenarios: Vec<EmissionFactorSet>,
    pub uncertainty: UncertaintySpec,
    pub default_scenario: String,
    common: RawScenario,
}

impl ScenarioConfig {
    /// Only the built-in default preset, with default uncertainty.
    pub fn builtin() -> Self {
        let common = RawScenario::default();
        let default = preset("this-study").expect("preset");
        Self {
            scenarios: vec![default],
            uncertainty: UncertaintySpec::default(),
            default_scenario: "this-study".into(),
            common,
        }
    }

    /// Looks up a declared scenario, falling back to `[common]` plus a
    /// preset of that name.
    pub fn scenario(&self, name: &str) -> Result<EmissionFactorSet> {
        if let Some(s) = self.scenarios.iter().find(|s| s.scenario_name == name) {
            return Ok(s.clone());
        }
        if preset(name).is_some() {
            let raw = RawScenario {
                preset: Some(name.to_string()),
                ..Default::default()
            };
            return build_scenario(name, &self.common, &raw);
        }
        Err(Error::UnknownScenario(name.to_string()))
    }

    pub fn default(&self) -> Result<EmissionFactorSet> {
        self.scenario(&self.default_scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum RawSeries {
    Constant(f64),
    Table(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: Option<String>,
    #[serde(default)]
    heating_value: BTreeMap<String, RawSeries>,
    #[serde(default)]
    carbon_content: BTreeMap<String, f64>,
    #[serde(default)]
    oxidation: BTreeMap<String, RawSeries>,
    cement_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum RawSigma {
    All(f64),
    PerSource(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum RawStock {
    Absolute(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUncertainty {
    draws: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    sigma: BTreeMap<String, RawSigma>,
    #[serde(default)]
    stock_sigma: BTreeMap<String, RawStock>,
    stock_sigma_from: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    default_scenario: Option<String>,
    #[serde(default)]
    common: RawScenario,
    #[serde(default)]
    scenario: BTreeMap<String, RawScenario>,
    #[serde(default)]
    uncertainty: RawUncertainty,
}

fn source(token: &str) -> Result<SourceKind> {
    token
        .parse()
        .map_err(|_| Error::Config(format!("unknown source '{token}'")))
}

fn series(raw: &RawSeries, key: &str, default_fallback: Option<f64>) -> Result<YearSeries> {
    match raw {
        RawSeries::Constant(v) => Ok(YearSeries::constant(*v)),
        RawSeries::Table(t) => {
            let mut fallback = default_fallback;
            let mut by_year = BTreeMap::new();
            for (k, v) in t {
                if k == "fallback" {
                    fallback = Some(*v);
                } else {
                    let year: i32 = k
                        .parse()
                        .map_err(|_| Error::Config(format!("{key}: '{k}' is not a year")))?;
                    by_year.insert(year, *v);
                }
            }
            let fallback = fallback
                .ok_or_else(|| Error::Config(format!("missing required field {key}.fallback")))?;
            Ok(YearSeries { fallback, by_year })
        }
    }
}

fn apply(set: &mut EmissionFactorSet, raw: &RawScenario) -> Result<()> {
    for (token, s) in &raw.heating_value {
        let src = source(token)?;
        let fallback = set.heating_value.series(src).map(|s| s.fallback);
        set.heating_value
            .set(src, series(s, &format!("heating_value.{token}"), fallback)?)?;
    }
    for (token, c) in &raw.carbon_content {
        set.carbon_content.insert(source(token)?, *c);
    }
    for (token, s) in &raw.oxidation {
        let src = source(token)?;
        let fallback = set.oxidation.get(&src).map(|s| s.fallback);
        set.oxidation
            .insert(src, series(s, &format!("oxidation.{token}"), fallback)?);
    }
    if raw.cement_factor.is_some() {
        set.cement_factor = raw.cement_factor;
    }
    Ok(())
}

fn build_scenario(
    name: &str,
    common: &RawScenario,
    raw: &RawScenario,
) -> Result<EmissionFactorSet> {
    let mut set = EmissionFactorSet::new(name);
    apply(&mut set, common)?;
    if let Some(p) = raw.preset.as_deref().or(common.preset.as_deref()) {
        let preset = preset(p).ok_or_else(|| Error::Config(format!("unknown preset '{p}'")))?;
        for src in SourceKind::FUELS {
            if let Some(hv) = preset.heating_value.series(src) {
                set.heating_value.set(src, hv.clone())?;
            }
            if let Some(c) = preset.carbon_content.get(&src) {
                set.carbon_content.insert(src, *c);
            }
            if let Some(o) = preset.oxidation.get(&src) {
                set.oxidation.insert(src, o.clone());
            }
        }
    }
    apply(&mut set, raw)?;

    // A fuel is either fully specified or absent.
    let mut missing = Vec::new();
    for src in SourceKind::FUELS {
        let present = [
            set.heating_value.series(src).is_some(),
            set.carbon_content.contains_key(&src),
            set.oxidation.contains_key(&src),
        ];
        if present.iter().any(|p| *p) {
            for (field, p) in ["heating_value", "carbon_content", "oxidation"]
                .iter()
                .zip(present)
            {
                if !p {
                    missing.push(format!("{field}.{src}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "scenario '{name}': missing required field(s) {}",
            missing.join(", ")
        )));
    }
    set.validate()?;
    Ok(set)
}

fn uncertainty(raw: &RawUncertainty) -> Result<UncertaintySpec> {
    let mut spec = UncertaintySpec::default();
    if let Some(d) = raw.draws {
        spec.draws = d;
    }
    if let Some(s) = raw.seed {
        spec.seed = s;
    }
    for (kind_token, sigma) in &raw.sigma {
        let kind: InputKind = kind_token.parse()?;
        match sigma {
            RawSigma::All(s) => {
                for src in SourceKind::ALL.into_iter().filter(|s| kind.applies_to(*s)) {
                    spec.set_sigma(kind, src, *s)?;
                }
            }
            RawSigma::PerSource(map) => {
                for (token, s) in map {
                    spec.set_sigma(kind, source(token)?, *s)?;
                }
            }
        }
    }
    let from = raw.stock_sigma_from.unwrap_or(2000);
    for (token, raw_stock) in &raw.stock_sigma {
        let src = source(token)?;
        let value = match raw_stock {
            RawStock::Absolute(v) if *v >= 0.0 => {
                let exp = if src == SourceKind::NaturalGas { 9 } else { 6 };
                StockSigma::Absolute(v * 10f64.powi(exp))
            }
            RawStock::Keyword(k) if k == "history" => StockSigma::History { from },
            _ => {
                return Err(Error::Config(format!(
                    "stock_sigma.{token} must be a nonnegative number or \"history\""
                )))
            }
        };
        spec.stock_sigma.insert(src, value);
    }
    Ok(spec)
}

/// Parses and validates a TOML scenario configuration.
pub fn parse_scenario_config<R: Read>(mut input: R) -> Result<ScenarioConfig> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::Config(format!("unreadable config: {e}")))?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| Error::Config(e.message().to_string()))?;

    let mut scenarios = Vec::new();
    let mut errors = Vec::new();
    for (name, s) in &raw.scenario {
        match build_scenario(name, &raw.common, s) {
            Ok(set) => scenarios.push(set),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors.join("; ")));
    }
    let default_scenario = raw
        .default_scenario
        .clone()
        .unwrap_or_else(|| "this-study".to_string());
    let mut config = ScenarioConfig {
        scenarios,
        uncertainty: uncertainty(&raw.uncertainty)?,
        default_scenario,
        common: raw.common,
    };
    let default = config.default().map_err(|_| {
        Error::Config(format!(
            "default scenario '{}' is neither declared nor a preset",
            config.default_scenario
        ))
    })?;
    if config.scenarios.is_empty() {
        config.scenarios.push(default);
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coal(set: &EmissionFactorSet) -> (f64, f64, f64) {
        let r = set.resolve(SourceKind::Coal, 2018).unwrap();
        (r.heating_value, r.carbon_content, r.oxidation)
    }

    #[test]
    fn this_study_preset() {
        assert_eq!(coal(&preset("this-study").unwrap()), (20.95, 26.59, 0.92));
    }

    #[test]
    fn oxidation_presets() {
        assert_eq!(coal(&preset("BP").unwrap()).2, 1.00);
        assert_eq!(coal(&preset("UNFCCC-CN").unwrap()).2, 0.94);
        assert_eq!(coal(&preset("CDIAC").unwrap()).2, 0.98);
        assert_eq!(coal(&preset("IEA").unwrap()).2, 0.98);
        for p in ["EDGAR", "EIA", "WorldBank"] {
            assert_eq!(coal(&preset(p).unwrap()).2, 1.00);
        }
        assert_eq!(coal(&preset("UN-HV").unwrap()).0, 21.4);
        assert_eq!(coal(&preset("IPCC-default").unwrap()).1, 25.9);
        assert!(preset("nope").is_none());
    }

    #[test]
    fn oxidation_out_of_range_rejected() {
        let text = "[scenario.x]\npreset = \"this-study\"\noxidation.coal = 1.2\n";
        let err = parse_scenario_config(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("(0, 1]"), "{err}");
    }

    #[test]
    fn unknown_preset_and_missing_field() {
        let err = parse_scenario_config("[scenario.x]\npreset = \"foo\"\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown preset 'foo'"));
        let err = parse_scenario_config("[scenario.x]\nheating_value.oil = 42.0\n".as_bytes())
            .unwrap_err();
        assert!(err.to_string().contains("carbon_content.oil"), "{err}");
        assert!(err.to_string().contains("oxidation.oil"), "{err}");
    }

    #[test]
    fn common_section_and_year_series() {
        let text = r#"
default_scenario = "mine"
[common]
heating_value.oil = 41.8
carbon_content.oil = 20.08
oxidation.oil = 0.98
cement_factor = 0.08

[scenario.mine]
preset = "this-study"
heating_value.coal = { 2005 = 20.5, 2006 = 20.4 }
oxidation.coal = { fallback = 0.92, 2018 = 0.93 }

[uncertainty]
draws = 500
seed = 7
sigma.production = 0.02
sigma.carbon_content.coal = 0.003
sigma.cement_factor = 0.05
stock_sigma.coal = "history"
stock_sigma.natural_gas = 2.5
"#;
        let cfg = parse_scenario_config(text.as_bytes()).unwrap();
        let mine = cfg.scenario("mine").unwrap();
        assert_eq!(
            mine.heating_value.lookup(SourceKind::Coal, 2005),
            Some(20.5)
        );
        assert_eq!(
            mine.heating_value.lookup(SourceKind::Coal, 2018),
            Some(20.95)
        );
        assert_eq!(mine.oxidation[&SourceKind::Coal].get(2018), 0.93);
        assert_eq!(mine.cement_factor, Some(0.08));

        // Undeclared preset picks up [common].
        let bp = cfg.scenario("BP").unwrap();
        assert_eq!(coal(&bp).2, 1.0);
        assert_eq!(bp.carbon_content[&SourceKind::Oil], 20.08);
        assert!(matches!(
            cfg.scenario("zzz"),
            Err(Error::UnknownScenario(_))
        ));

        let u = &cfg.uncertainty;
        assert_eq!((u.draws, u.seed), (500, 7));
        assert_eq!(u.sigma(InputKind::Production, SourceKind::Oil), 0.02);
        assert_eq!(u.sigma(InputKind::Production, SourceKind::Cement), 0.0);
        assert_eq!(u.sigma(InputKind::CementFactor, SourceKind::Cement), 0.05);
        assert_eq!(
            u.stock_sigma[&SourceKind::Coal],
            StockSigma::History { from: 2000 }
        );
        assert_eq!(
            u.stock_sigma[&SourceKind::NaturalGas],
            StockSigma::Absolute(2.5e9)
        );
    }

    #[test]
    fn default_must_resolve() {
        let err = parse_scenario_config("default_scenario = \"x\"\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("neither declared nor a preset"));
        let cfg = parse_scenario_config("".as_bytes()).unwrap();
        assert_eq!(cfg.scenarios.len(), 1);
        assert_eq!(cfg.default().unwrap().scenario_name, "this-study");
    }
}
