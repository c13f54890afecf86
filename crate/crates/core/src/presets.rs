//! Built-in LiDAR catalog: 14 devices across the surround, solid-state and Risley families.
//!
//! Presets are plain `LidarModel` JSON files compiled into the binary. Any other path is
//! loaded from disk with the same schema.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::sensor::{LidarFamily, LidarModel, SimError};

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown lidar preset `{0}` (not a built-in name or a readable file)")]
    Unknown(String),
    #[error("preset `{name}`: {source}")]
    Schema {
        name: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("preset `{name}`: {source}")]
    Invalid {
        name: String,
        #[source]
        source: SimError,
    },
    #[error("reading preset `{name}`: {source}")]
    Io {
        name: String,
        #[source]
        source: std::io::Error,
    },
}

macro_rules! catalog {
    ($($name:literal),* $(,)?) => {
        const BUILTIN: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../presets/", $name, ".json")))),*
        ];
    };
}

catalog!(
    "velodyne_vlp16",
    "velodyne_hdl32e",
    "velodyne_hdl64e",
    "ouster_os1_64",
    "ouster_os2_128",
    "hesai_pandar64",
    "hesai_pandar40p",
    "robosense_rs32",
    "robosense_m1",
    "blickfeld_cube1",
    "innoviz_one",
    "livox_mid40",
    "livox_horizon",
    "livox_avia",
);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetInfo {
    pub name: String,
    pub family: LidarFamily,
    pub frame_period: f64,
    pub source: String,
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// Raw JSON text of a built-in preset.
pub fn builtin_preset_text(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn parse_preset(name: &str, text: &str) -> Result<LidarModel, PresetError> {
    let model: LidarModel = serde_json::from_str(text).map_err(|source| PresetError::Schema {
        name: name.to_string(),
        source,
    })?;
    model.validate().map_err(|source| PresetError::Invalid {
        name: name.to_string(),
        source,
    })?;
    Ok(model)
}

/// Resolves a built-in name first, then a file path.
pub fn load_lidar_preset(name_or_path: &str) -> Result<LidarModel, PresetError> {
    if let Some(text) = builtin_preset_text(name_or_path) {
        return parse_preset(name_or_path, text);
    }
    let path = Path::new(name_or_path);
    if !path.is_file() {
        return Err(PresetError::Unknown(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| PresetError::Io {
        name: name_or_path.to_string(),
        source,
    })?;
    parse_preset(name_or_path, &text)
}

/// Canonical file text for a model; built-in files are stored in exactly this form.
pub fn preset_to_json(model: &LidarModel) -> String {
    let mut s = serde_json::to_string_pretty(model).expect("lidar model serializes");
    s.push('\n');
    s
}

pub fn preset_catalog() -> Vec<PresetInfo> {
    preset_names()
        .map(|name| {
            let m = load_lidar_preset(name).expect("built-in presets are valid");
            PresetInfo {
                name: m.name.clone(),
                family: m.family,
                frame_period: m.frame_period(),
                source: m.source,
            }
        })
        .collect()
}
