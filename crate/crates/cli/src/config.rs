use std::fs;
use std::path::{Path, PathBuf};

use fdi_core::dsl::{AttackSpec, AttackWindow, InjectionMode};
use fdi_core::engine::{EngineError, Scenario, DEFAULT_DT};
use fdi_core::metrics::MetricsConfig;
use fdi_core::model::{IdmParams, OvrvParams, SpeedProfile, VehicleKind, VehicleSpec};
use fdi_core::validate::MeasurementDomain;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::presets;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("unknown preset `{0}` (see `fdi presets`)")]
    UnknownPreset(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub accel_max: f64,
    pub decel_max: f64,
    pub v_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            accel_max: 1.4,
            decel_max: 2.5,
            v_max: 30.0,
        }
    }
}

/// Attack on one ACC vehicle, with `g1` a function of `s` and `g2` of `dv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub g1: String,
    pub g2: String,
    #[serde(default = "additive")]
    pub mode: InjectionMode,
    pub t_on: f64,
    pub t_off: f64,
}

fn additive() -> InjectionMode {
    InjectionMode::Additive
}

fn default_length() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum VehicleConfig {
    Leader {
        speed: f64,
        #[serde(default = "default_length")]
        length: f64,
    },
    Idm {
        #[serde(default)]
        params: IdmParams,
    },
    Acc {
        #[serde(default)]
        params: OvrvParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attack: Option<AttackConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSettings {
    pub asv_window: (f64, f64),
    pub fuel_window: (f64, f64),
    pub first_vehicle: usize,
    pub last_vehicle: usize,
    pub tracked_vehicle: usize,
    /// Also simulate the attack-free scenario and report percent changes.
    pub compare_baseline: bool,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        let m = MetricsConfig::default();
        Self {
            asv_window: m.asv_window,
            fuel_window: m.fuel_window,
            first_vehicle: m.first_vehicle,
            last_vehicle: m.last_vehicle,
            tracked_vehicle: m.tracked_vehicle,
            compare_baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    /// Default output directory when none is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Render speed and displacement SVG charts next to the CSVs.
    #[serde(default = "yes")]
    pub svg: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: None,
            svg: true,
        }
    }
}

/// A complete run description. Vehicle ids follow list order, starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Preset this config was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    pub v_star: f64,
    #[serde(default)]
    pub limits: Limits,
    pub vehicles: Vec<VehicleConfig>,
    #[serde(default)]
    pub metrics: MetricsSettings,
    #[serde(default)]
    pub domain: MeasurementDomain,
    #[serde(default)]
    pub output: OutputSettings,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// Everything a run needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub metrics: MetricsConfig,
    pub domain: MeasurementDomain,
}

impl ScenarioConfig {
    /// Validates the whole config and reports every problem found.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let mut errs = Vec::new();
        let mut vehicles = Vec::with_capacity(self.vehicles.len());
        for (idx, v) in self.vehicles.iter().enumerate() {
            let id = idx + 1;
            let kind = match v {
                VehicleConfig::Leader { speed, length } => VehicleKind::Leader {
                    profile: SpeedProfile::Constant(*speed),
                    length: *length,
                },
                VehicleConfig::Idm { params } => VehicleKind::Hdv(*params),
                VehicleConfig::Acc { params, attack } => VehicleKind::Acc {
                    params: *params,
                    attack: attack.as_ref().and_then(|a| match build_attack(a) {
                        Ok(spec) => Some(spec),
                        Err(e) => {
                            errs.push(format!("vehicle {id}: {e}"));
                            None
                        }
                    }),
                },
            };
            vehicles.push(VehicleSpec { id, kind });
        }
        let scenario = Scenario {
            vehicles,
            dt: self.dt,
            t_end: self.t_end,
            v_star: self.v_star,
            accel_max: self.limits.accel_max,
            decel_max: self.limits.decel_max,
            v_max: self.limits.v_max,
        };
        match scenario.validate() {
            Ok(()) => {}
            Err(EngineError::InvalidScenario(list)) => errs.extend(list),
            Err(e) => errs.push(e.to_string()),
        }
        if let Err(e) = self.domain.validate() {
            errs.push(format!("domain: {e}"));
        }
        let m = &self.metrics;
        let n = self.vehicles.len();
        for (label, (a, b)) in [("asv_window", m.asv_window), ("fuel_window", m.fuel_window)] {
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= self.t_end) {
                errs.push(format!(
                    "metrics.{label} [{a}, {b}] must be increasing and inside [0, {}]",
                    self.t_end
                ));
            }
        }
        if !(1 <= m.first_vehicle && m.first_vehicle <= m.last_vehicle && m.last_vehicle <= n) {
            errs.push(format!(
                "metrics vehicle range {}..={} must lie within 1..={n}",
                m.first_vehicle, m.last_vehicle
            ));
        }
        if !(1..=n).contains(&m.tracked_vehicle) {
            errs.push(format!(
                "metrics.tracked_vehicle {} must lie within 1..={n}",
                m.tracked_vehicle
            ));
        }
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        Ok(Prepared {
            scenario,
            metrics: MetricsConfig {
                v_star: self.v_star,
                asv_window: m.asv_window,
                fuel_window: m.fuel_window,
                first_vehicle: m.first_vehicle,
                last_vehicle: m.last_vehicle,
                tracked_vehicle: m.tracked_vehicle,
            },
            domain: self.domain,
        })
    }

    pub fn attacks(&self) -> impl Iterator<Item = (usize, &AttackConfig)> {
        self.vehicles
            .iter()
            .enumerate()
            .filter_map(|(i, v)| match v {
                VehicleConfig::Acc {
                    attack: Some(a), ..
                } => Some((i + 1, a)),
                _ => None,
            })
    }

    /// The same config with every attack removed.
    pub fn without_attacks(&self) -> ScenarioConfig {
        let mut cfg = self.clone();
        for v in &mut cfg.vehicles {
            if let VehicleConfig::Acc { attack, .. } = v {
                *attack = None;
            }
        }
        cfg
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

fn build_attack(a: &AttackConfig) -> Result<AttackSpec, String> {
    let window = AttackWindow::new(a.t_on, a.t_off).map_err(|e| e.to_string())?;
    AttackSpec::parse(&a.g1, &a.g2, a.mode, window).map_err(|e| e.to_string())
}

/// Reads and fully validates a JSON config. A top-level `"preset"` key
/// starts from that preset; other top-level keys replace the preset's.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = parse_config(&text, path)?;
    cfg.prepare()?;
    Ok(cfg)
}

/// Parses config text without semantic validation.
pub fn parse_config(text: &str, path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let syntax = |e: serde_json::Error| ConfigError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let raw: Value = serde_json::from_str(text).map_err(syntax)?;
    let preset = raw.get("preset").and_then(Value::as_str);
    let Some(name) = preset else {
        return serde_json::from_str(text).map_err(syntax);
    };
    let base = presets::preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.into()))?;
    let mut merged = serde_json::to_value(base).expect("preset serializes");
    if let (Value::Object(dst), Value::Object(src)) = (&mut merged, raw) {
        dst.extend(src);
    }
    serde_json::from_value(merged).map_err(|e| ConfigError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
