//! Experiment configuration files.
//!
//! Files mirror [`ExperimentConfig`] field for field; unknown keys are
//! rejected. Anything that is not an existing path is looked up as a preset.

use std::fs;
use std::path::Path;

use thermoctl_core::experiments::PRESET_NAMES;
use thermoctl_core::{preset, ExperimentConfig};

use crate::error::{CliError, Result};

/// Parses and validates configuration text; `origin` labels error messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| CliError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
    config.validate()?;
    Ok(config)
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_config_str(&text, path)
}

/// `source` is a configuration file path or one of the preset names.
pub fn load_config(source: &str) -> Result<ExperimentConfig> {
    let path = Path::new(source);
    if path.is_file() {
        return read_config(path);
    }
    if PRESET_NAMES.contains(&source) {
        return Ok(preset(source)?);
    }
    Err(CliError::Parse {
        path: path.to_path_buf(),
        message: format!("no such file and not a preset (known presets: {})", PRESET_NAMES.join(", ")),
    })
}

/// Fully resolved configuration text; parsing it yields an equal config.
pub fn config_echo(config: &ExperimentConfig) -> Result<String> {
    Ok(toml::to_string(config)?)
}

pub fn write_config(config: &ExperimentConfig, path: &Path) -> Result<()> {
    fs::write(path, config_echo(config)?).map_err(CliError::io(path))
}
