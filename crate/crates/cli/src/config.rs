//! JSON training configuration.

use std::fs;
use std::path::Path;

use simdreg_core::model::train::TrainConfig;

use crate::error::{CliError, Result};

/// Parse a config; unknown or mistyped fields are reported with their path.
pub fn parse_config(text: &str, path: &Path) -> Result<TrainConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: TrainConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate().map_err(|e| match e {
        simdreg_core::Error::InvalidConfig { field, reason } => CliError::Config {
            path: path.to_path_buf(),
            field: field.to_string(),
            message: reason,
        },
        other => CliError::Config {
            path: path.to_path_buf(),
            field: ".".into(),
            message: other.to_string(),
        },
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, path)
}
