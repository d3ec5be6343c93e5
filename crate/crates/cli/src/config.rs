//! Run configuration files and `path=value` overrides.

use std::path::{Path, PathBuf};

use drcbf_core::acc::{AccParameters, AccScenario, ControllerConfig, SimulationSettings};
use drcbf_core::SignalSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Parent directory for run artifacts.
    pub dir: PathBuf,
    /// Subdirectory name; defaults to the controller mode.
    pub name: Option<String>,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            name: None,
            plots: true,
        }
    }
}

/// On-disk run description: an ACC scenario plus output settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: AccParameters,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default = "zero_disturbance")]
    pub disturbance: SignalSpec,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub output: OutputConfig,
}

fn zero_disturbance() -> SignalSpec {
    SignalSpec::zero(2)
}

impl RunConfig {
    pub fn from_scenario(scenario: AccScenario) -> Self {
        Self {
            params: scenario.params,
            controller: scenario.controller,
            disturbance: scenario.disturbance,
            simulation: scenario.simulation,
            output: OutputConfig::default(),
        }
    }

    pub fn scenario(&self) -> AccScenario {
        AccScenario {
            params: self.params.clone(),
            controller: self.controller.clone(),
            disturbance: self.disturbance.clone(),
            simulation: self.simulation.clone(),
        }
    }

    /// Directory this run writes into.
    pub fn run_dir(&self) -> PathBuf {
        let name = self
            .output
            .name
            .clone()
            .unwrap_or_else(|| self.controller.mode.to_string());
        self.output.dir.join(name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Deserializes with the offending key path in the error.
pub fn parse_value(value: Value) -> Result<RunConfig, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| CliError::Config {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

pub fn parse_str(text: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: RunConfig =
        serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
    de.end().map_err(|e| CliError::Config {
        path: ".".into(),
        message: e.to_string(),
    })?;
    Ok(config)
}

/// One `path=value` assignment. Values are JSON when they parse as JSON and
/// plain strings otherwise, so `controller.mode=adrcbf` works unquoted.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: String,
    pub value: Value,
}

impl Override {
    pub fn new(path: impl Into<String>, value: Value) -> Self {
        Self {
            path: path.into(),
            value,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let (path, raw) = text.split_once('=').ok_or_else(|| CliError::Config {
            path: text.into(),
            message: "override must look like path=value".into(),
        })?;
        Ok(Self::new(path.trim(), parse_scalar(raw.trim())))
    }
}

pub fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()))
}

/// Writes `value` at a dotted path; numeric segments index arrays. A scalar
/// written onto an existing array fills every element, so `params.r=100`
/// sets both entries.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let unknown = |message: String| CliError::Config {
        path: path.into(),
        message,
    };
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(unknown("empty path segment".into()));
    }
    let (last, parents) = segments.split_last().expect("split is never empty");
    let mut node = root;
    for seg in parents {
        node = match node {
            Value::Object(map) => map
                .get_mut(*seg)
                .ok_or_else(|| unknown(format!("no key `{seg}`")))?,
            Value::Array(items) => {
                let len = items.len();
                seg.parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| {
                        unknown(format!("index `{seg}` out of range for length {len}"))
                    })?
            }
            _ => return Err(unknown(format!("`{seg}` does not name a section"))),
        };
    }
    let slot = match node {
        Value::Object(map) => map.entry(last.to_string()).or_insert(Value::Null),
        Value::Array(items) => {
            let len = items.len();
            last.parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| unknown(format!("index `{last}` out of range for length {len}")))?
        }
        _ => return Err(unknown(format!("`{last}` has no parent section"))),
    };
    match (slot, value) {
        (Value::Array(items), v) if !v.is_array() && !v.is_object() => {
            items.iter_mut().for_each(|item| *item = v.clone());
        }
        (slot, v) => *slot = v,
    }
    Ok(())
}

/// Applies overrides on top of the fully defaulted config so any documented
/// key can be addressed even when the file omits it.
pub fn apply_overrides(config: &RunConfig, overrides: &[Override]) -> Result<RunConfig, CliError> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut value = serde_json::to_value(config).expect("config serializes");
    for o in overrides {
        set_path(&mut value, &o.path, o.value.clone())?;
    }
    parse_value(value)
}

pub fn load(path: &Path, overrides: &[Override]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    apply_overrides(&parse_str(&text)?, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_document_uses_defaults() {
        let c = parse_str("{}").unwrap();
        assert_eq!(c.params, AccParameters::default());
        assert_eq!(c.disturbance.channels.len(), 2);
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = parse_str(r#"{"params": {"mass": 1.0, "wings": 2}}"#).unwrap_err();
        let CliError::Config { path, message } = err else {
            panic!("wrong error kind")
        };
        assert_eq!(path, "params.wings");
        assert!(message.contains("wings"));

        let err = parse_str(r#"{"simulation": {"horizon": "long"}}"#).unwrap_err();
        assert!(matches!(err, CliError::Config { ref path, .. } if path == "simulation.horizon"));
    }

    #[test]
    fn scalar_broadcasts_into_array() {
        let mut v = json!({"params": {"r": [1.0, 1.0], "k": [0.1, 0.2]}});
        set_path(&mut v, "params.r", json!(100.0)).unwrap();
        set_path(&mut v, "params.k.1", json!(0.5)).unwrap();
        assert_eq!(v, json!({"params": {"r": [100.0, 100.0], "k": [0.1, 0.5]}}));
        assert!(set_path(&mut v, "params.k.7", json!(0.5)).is_err());
        assert!(set_path(&mut v, "nothing.here", json!(0.5)).is_err());
    }

    #[test]
    fn overrides_reach_defaulted_keys() {
        let base = parse_str("{}").unwrap();
        let c = apply_overrides(
            &base,
            &[
                Override::parse("controller.mode=adrcbf").unwrap(),
                Override::parse("controller.k_scale=10").unwrap(),
                Override::parse("params.r=100").unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(c.controller.mode.to_string(), "adrcbf");
        assert_eq!(c.controller.k_scale, 10.0);
        assert_eq!(c.params.r, vec![100.0, 100.0]);
        let err =
            apply_overrides(&base, &[Override::parse("params.wings=1").unwrap()]).unwrap_err();
        assert!(matches!(err, CliError::Config { .. }));
    }
}
