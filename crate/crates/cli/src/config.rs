//! Optional JSON run configuration. Command-line flags win over file values.

use std::path::Path;

use ooaf::model::ModelConfig;
use ooaf::planner::SolveOptions;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Partial model configuration laid over the selected preset.
    #[serde(default)]
    pub model: Map<String, Value>,
    pub solve: Option<SolveOptions>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn sets_model_field(&self, key: &str) -> bool {
        self.model.contains_key(key)
    }

    /// `base` with the file's `model` section applied on top.
    pub fn model_over(&self, base: ModelConfig) -> Result<ModelConfig, CliError> {
        let mut v = serde_json::to_value(base).map_err(|e| CliError::Usage(e.to_string()))?;
        let obj = v.as_object_mut().expect("config serializes to an object");
        for (k, x) in &self.model {
            obj.insert(k.clone(), x.clone());
        }
        serde_json::from_value(v).map_err(|e| CliError::Usage(format!("model config: {e}")))
    }
}
