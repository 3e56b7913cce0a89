//! Layered configuration: built-in defaults, then a JSON file, then flags.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pamir_core::{BasisSpec, FitConfig, MhConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Master seed; drawn from system entropy when absent everywhere.
    pub seed: Option<u64>,
    pub basis: BasisSpec,
    pub fit: FitConfig,
    /// Prediction-time chains.
    pub predict: MhConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: None,
            basis: BasisSpec::default(),
            fit: FitConfig::default(),
            predict: MhConfig::prediction(),
        }
    }
}

fn unknown_keys(overlay: &Value, base: &Value, path: &str, out: &mut Vec<String>) {
    if let (Value::Object(o), Value::Object(b)) = (overlay, base) {
        for (k, v) in o {
            let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            match b.get(k) {
                Some(bv) => unknown_keys(v, bv, &here, out),
                None => out.push(here),
            }
        }
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Config {
    /// Defaults overlaid with the JSON document `text`. Nested objects merge
    /// key by key, so a partial `predict` block keeps the prediction defaults.
    pub fn from_json_overlay(text: &str, source: &str) -> Result<Self, CliError> {
        let overlay: Value =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("{source}: invalid JSON: {e}")))?;
        if !overlay.is_object() {
            return Err(CliError::Input(format!("{source}: config must be a JSON object")));
        }
        let mut base = serde_json::to_value(Config::default()).expect("config serializes");
        let mut unknown = Vec::new();
        unknown_keys(&overlay, &base, "", &mut unknown);
        // Basis variants carry different fields; any shape is validated on deserialization.
        unknown.retain(|k| !k.starts_with("basis."));
        if !unknown.is_empty() {
            return Err(CliError::Input(format!("{source}: unknown config keys: {}", unknown.join(", "))));
        }
        if let Some(b) = overlay.get("basis") {
            base["basis"] = b.clone();
        }
        merge(&mut base, overlay);
        let cfg: Config = serde_json::from_value(base).map_err(|e| CliError::Input(format!("{source}: {e}")))?;
        cfg.basis.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_json_overlay(&text, &p.display().to_string())
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// The configured seed, or a fresh one from system entropy that is
    /// reported on standard error.
    pub fn resolve_seed(&mut self) -> u64 {
        match self.seed {
            Some(s) => s,
            None => {
                let s: u64 = rand::random();
                eprintln!("seed: {s} (drawn from system entropy; pass --seed {s} to reproduce)");
                self.seed = Some(s);
                s
            }
        }
    }
}
