//! Versioned JSON model files.
//!
//! The file is a single JSON object whose first key is `format_version`.
//! Keys appear in a fixed order and floats are written in shortest
//! round-trip form, so saving a loaded model reproduces the file byte for
//! byte. Loading re-checks every model invariant.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeLevel, CascadeModel, TrainConfig};
use crate::data::FeatureSchema;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: i64 = 1;

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format_version: i64,
    schema: &'a FeatureSchema,
    config: &'a TrainConfig,
    levels: &'a [CascadeLevel],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[allow(dead_code)]
    format_version: i64,
    schema: FeatureSchema,
    config: TrainConfig,
    levels: Vec<CascadeLevel>,
}

pub fn to_json(m: &CascadeModel) -> Result<String> {
    Ok(serde_json::to_string(&ModelFileRef {
        format_version: FORMAT_VERSION,
        schema: &m.schema,
        config: &m.config,
        levels: &m.levels,
    })?)
}

pub fn from_json(text: &str) -> Result<CascadeModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("format_version")
        .ok_or_else(|| Error::invariant("model file has no format_version"))?;
    let version = version
        .as_i64()
        .ok_or_else(|| Error::invariant("format_version is not an integer"))?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    // parse from text rather than the Value so floats keep full precision
    let file: ModelFile = serde_json::from_str(text)?;
    let model = CascadeModel {
        levels: file.levels,
        schema: file.schema,
        config: file.config,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(m: &CascadeModel, path: &Path) -> Result<()> {
    let text = to_json(m)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<CascadeModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
