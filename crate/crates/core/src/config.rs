//! The JSON run configuration: parsing with field-level diagnostics,
//! validation, and the resolved parameter table.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::degradation::DegradationParams;
use crate::error::{Error, Result};
use crate::harness::RunSpec;
use crate::load::LoadProfile;
use crate::mpc::{MpcConfig, Scenario};
use crate::params::SystemParams;
use crate::plant::Fidelity;

/// Environment variable consulted when no config path is given.
pub const CONFIG_ENV: &str = "SPS_EMS_CONFIG";

/// The configuration shipped with the crate.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../configs/default.json");

/// Weights are either one of the presets or the ones written in the `mpc`
/// section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioChoice {
    Preset(Scenario),
    Custom(CustomTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CustomTag {
    Custom,
}

impl ScenarioChoice {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioChoice::Preset(s) => s.name(),
            ScenarioChoice::Custom(_) => "custom",
        }
    }
}

impl std::str::FromStr for ScenarioChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "custom" {
            Ok(ScenarioChoice::Custom(CustomTag::Custom))
        } else {
            s.parse().map(ScenarioChoice::Preset)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub mode: Fidelity,
    /// End of the run (s); the end of the load profile when absent.
    pub t_final: Option<f64>,
    pub plant_dt: f64,
    pub mpc_period: f64,
    pub log_period: f64,
    pub seed: u64,
    /// Scenarios of `run` (first entry) and `compare` (all entries).
    pub scenarios: Vec<ScenarioChoice>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: Fidelity::Device,
            t_final: None,
            plant_dt: 1e-3,
            mpc_period: 1.0,
            log_period: 0.1,
            seed: 0,
            scenarios: Scenario::ALL
                .iter()
                .map(|&s| ScenarioChoice::Preset(s))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub system: SystemParams,
    pub mpc: MpcConfig,
    pub degradation: DegradationParams,
    pub load_profile: LoadProfile,
    pub run: RunSection,
}

impl Config {
    /// Parses a JSON document. Unknown keys and type errors are reported
    /// with the dotted path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            Error::config(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn shipped_default() -> Self {
        Self::from_json(DEFAULT_CONFIG_JSON).expect("shipped default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.scenarios.is_empty() {
            return Err(Error::config(
                "run.scenarios",
                "must name at least one scenario",
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.run.scenarios {
            if !seen.insert(*s) {
                return Err(Error::config(
                    "run.scenarios",
                    format!("{} is listed twice", s.name()),
                ));
            }
        }
        self.spec(self.run.scenarios[0], None)?.validate()
    }

    /// The run specification for one scenario, optionally overriding the
    /// fidelity mode.
    pub fn spec(&self, scenario: ScenarioChoice, mode: Option<Fidelity>) -> Result<RunSpec> {
        let mpc = match scenario {
            ScenarioChoice::Preset(s) => self.mpc.clone().with_preset(s.preset()),
            ScenarioChoice::Custom(_) => self.mpc.clone(),
        };
        let spec = RunSpec {
            name: scenario.name().to_string(),
            system: self.system,
            mpc,
            degradation: self.degradation,
            load: self.load_profile.clone(),
            mode: mode.unwrap_or(self.run.mode),
            t_final: self
                .run
                .t_final
                .unwrap_or_else(|| self.load_profile.t_final()),
            plant_dt: self.run.plant_dt,
            mpc_period: self.run.mpc_period,
            log_period: self.run.log_period,
            seed: self.run.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// One line per leaf parameter: dotted path, value in SI units, unit.
    pub fn resolved_table(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut rows = Vec::new();
        flatten("", &value, &mut rows);
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let unit = unit_of(&k);
            let _ = writeln!(
                out,
                "{k:<width$}  {v}{}",
                if unit.is_empty() {
                    String::new()
                } else {
                    format!(" {unit}")
                }
            );
        }
        out
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, out);
            }
        }
        serde_json::Value::Array(items) if items.iter().any(|i| i.is_object()) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        serde_json::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn unit_of(path: &str) -> &'static str {
    let leaf = path.rsplit('.').next().unwrap_or(path);
    match leaf {
        "v_nominal" => "V",
        "inductance" => "H",
        "resistance" => "ohm",
        "capacitance" => "F",
        "p_min" | "p_max" | "ramp_limit" | "p_g_ref" | "power" | "power_scale" => "W",
        "capacity_ahr" => "Ah",
        "droop_conductance" => "S",
        "ki" => "1/s",
        "zeta1" => "J/mol",
        "temp_b" => "K",
        "c_rate_fixed" => "1/h",
        "ts" | "t_final" | "plant_dt" | "mpc_period" | "log_period" | "t_start" | "t_end" => "s",
        _ => "",
    }
}

/// Picks the config file: an explicit path, then the environment
/// variable. `None` means the shipped default.
pub fn resolve_path(explicit: Option<&Path>) -> Option<std::path::PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).map(Into::into))
}
