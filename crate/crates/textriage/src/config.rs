//! Pipeline configuration: defaults, TOML file, dotted-key overrides.
//!
//! The file format is TOML with keys named exactly like the fields below,
//! usually written flat (`detect.global_thresh = 0.25`). Overrides use the
//! same dotted names.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use textriage_core::classify::DEFAULT_HYPOTHESIS_TEMPLATE;
use textriage_core::{ClaheConfig, DetectConfig, LabelSet, TileConfig};

pub const CONFIG_ENV: &str = "TEXTRIAGE_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("{key}: {message}")]
    Value { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Grayscale,
    Upscale,
    Clahe,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Grayscale => "grayscale",
            Stage::Upscale => "upscale",
            Stage::Clahe => "clahe",
        })
    }
}

impl FromStr for Stage {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "grayscale" => Ok(Stage::Grayscale),
            "upscale" => Ok(Stage::Upscale),
            "clahe" => Ok(Stage::Clahe),
            other => Err(ConfigError::Value {
                key: "stage_order".into(),
                message: format!("unknown stage {other:?}"),
            }),
        }
    }
}

pub fn parse_stages(list: &str) -> Result<Vec<Stage>, ConfigError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Stage::from_str)
        .collect()
}

/// Which implementation backs each model boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSelection {
    /// `nearest` or `sidecar`.
    pub scaler: String,
    /// `stencil` or `sidecar`.
    pub detector: String,
    /// `fixture`, `none` or `sidecar`.
    pub recognizer: String,
    /// `keyword` or `sidecar`.
    pub nli: String,
    /// Region annotation file or directory for the fixture recognizer.
    pub annotations: Option<PathBuf>,
    /// Keyword table for the keyword scorer (bundled table when unset).
    pub keywords: Option<PathBuf>,
    /// Shell command that starts the model bridge process.
    pub sidecar: Option<String>,
}

impl Default for BackendSelection {
    fn default() -> Self {
        Self {
            scaler: "nearest".into(),
            detector: "stencil".into(),
            recognizer: "fixture".into(),
            nli: "keyword".into(),
            annotations: None,
            keywords: None,
            sidecar: None,
        }
    }
}

const SCALERS: &[&str] = &["nearest", "sidecar"];
const DETECTORS: &[&str] = &["stencil", "sidecar"];
const RECOGNIZERS: &[&str] = &["fixture", "none", "sidecar"];
const SCORERS: &[&str] = &["keyword", "sidecar"];

impl BackendSelection {
    fn validate(&self) -> Result<(), ConfigError> {
        for (key, value, allowed) in [
            ("backends.scaler", &self.scaler, SCALERS),
            ("backends.detector", &self.detector, DETECTORS),
            ("backends.recognizer", &self.recognizer, RECOGNIZERS),
            ("backends.nli", &self.nli, SCORERS),
        ] {
            if !allowed.contains(&value.as_str()) {
                return Err(ConfigError::Value {
                    key: key.into(),
                    message: format!("{value:?} is not one of {allowed:?}"),
                });
            }
        }
        let wants_sidecar = [&self.scaler, &self.detector, &self.recognizer, &self.nli]
            .iter()
            .any(|b| *b == "sidecar");
        if wants_sidecar && self.sidecar.is_none() {
            return Err(ConfigError::Invalid(
                "a sidecar backend is selected but backends.sidecar is not set".into(),
            ));
        }
        Ok(())
    }

    pub fn uses_sidecar(&self) -> bool {
        [&self.scaler, &self.detector, &self.recognizer, &self.nli]
            .iter()
            .any(|b| *b == "sidecar")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stage_order: Vec<Stage>,
    pub clahe: ClaheConfig,
    pub tiles: TileConfig,
    pub detect: DetectConfig,
    pub labels: LabelSet,
    pub hypothesis_template: String,
    pub backends: BackendSelection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stage_order: vec![Stage::Grayscale, Stage::Upscale, Stage::Clahe],
            clahe: ClaheConfig::default(),
            tiles: TileConfig::default(),
            detect: DetectConfig::default(),
            labels: LabelSet::default(),
            hypothesis_template: DEFAULT_HYPOTHESIS_TEMPLATE.into(),
            backends: BackendSelection::default(),
        }
    }
}

fn invalid(e: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let count = |s: Stage| self.stage_order.iter().filter(|&&x| x == s).count();
        if count(Stage::Grayscale) != 1 {
            return Err(invalid("stage_order must contain grayscale exactly once"));
        }
        if count(Stage::Upscale) > 1 || count(Stage::Clahe) > 1 {
            return Err(invalid("stage_order lists a stage twice"));
        }
        let pos = |s: Stage| self.stage_order.iter().position(|&x| x == s);
        if let (Some(g), Some(c)) = (pos(Stage::Grayscale), pos(Stage::Clahe)) {
            if c < g {
                return Err(invalid("clahe must come after grayscale"));
            }
        }
        self.clahe.validate().map_err(invalid)?;
        self.tiles.validate().map_err(invalid)?;
        self.detect.validate().map_err(invalid)?;
        self.labels.validate().map_err(invalid)?;
        if !self.hypothesis_template.contains("{label}") {
            return Err(invalid("hypothesis_template must contain {label}"));
        }
        self.backends.validate()
    }

    /// Factor between detector coordinates and source coordinates.
    pub fn detector_scale(&self) -> usize {
        if self.stage_order.contains(&Stage::Upscale) {
            self.tiles.scale
        } else {
            1
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::File {
            path: "<toml>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::File { message, .. } => ConfigError::File {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// The file named by `explicit`, else by `$TEXTRIAGE_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    /// Sets one dotted key. The whole config is re-validated; on error `self`
    /// is left unchanged.
    pub fn set(&mut self, key: &str, value: Value) -> Result<(), ConfigError> {
        self.apply(std::iter::once((key.to_string(), value)))
    }

    /// Sets a dotted key from command-line text: JSON when it parses as
    /// JSON, a list when the target is a list, a plain string otherwise.
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let value = match serde_json::from_str::<Value>(raw) {
            Ok(v) => v,
            Err(_) if matches!(key, "stage_order" | "labels") => Value::Array(
                raw.split(',')
                    .map(|s| Value::String(s.trim().to_string()))
                    .collect(),
            ),
            Err(_) => Value::String(raw.to_string()),
        };
        self.set(key, value)
    }

    /// Applies a batch of overrides atomically. Accepts flat dotted keys and
    /// nested objects alike (`{"detect": {"global_thresh": 0.9}}`).
    pub fn apply(
        &mut self,
        overrides: impl IntoIterator<Item = (String, Value)>,
    ) -> Result<(), ConfigError> {
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        for (key, value) in overrides {
            let mut leaves = Vec::new();
            flatten_into(&key, value, &mut leaves);
            for (k, v) in leaves {
                set_path(&mut doc, &k, v)?;
            }
        }
        let next: Self = serde_json::from_value(doc).map_err(|e| ConfigError::Value {
            key: "config".into(),
            message: e.to_string(),
        })?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn apply_json(&mut self, overrides: &Value) -> Result<(), ConfigError> {
        match overrides {
            Value::Null => Ok(()),
            Value::Object(map) => self.apply(map.clone()),
            _ => Err(invalid("overrides must be a JSON object")),
        }
    }

    /// Flat `key = value` listing in TOML syntax.
    pub fn to_flat_toml(&self) -> String {
        let doc = serde_json::to_value(self).expect("config serializes");
        let mut leaves = Vec::new();
        flatten_into("", doc, &mut leaves);
        let mut out = String::new();
        for (k, v) in leaves {
            if v.is_null() {
                continue;
            }
            let rendered = match &v {
                Value::Number(n) if n.is_f64() && n.as_f64().is_some_and(|f| f.fract() == 0.0) => {
                    format!("{:.1}", n.as_f64().unwrap())
                }
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {rendered}\n"));
        }
        out
    }
}

/// Expands nested objects into dotted leaves; arrays and scalars are leaves.
fn flatten_into(prefix: &str, value: Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) if !map.is_empty() || prefix.is_empty() => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other)),
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map: &mut Map<String, Value> = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        if !map.contains_key(*part) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.get_mut(*part).expect("checked above");
    }
    Err(ConfigError::UnknownKey(key.to_string()))
}
