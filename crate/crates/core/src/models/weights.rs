//! JSON weight files.
//!
//! ```json
//! {
//!   "format": "robustcast-weights",
//!   "version": 1,
//!   "architecture": { "kind": "series", "hidden": 32, "history": 12, "horizon": 8 },
//!   "parameters": [ { "name": "encoder.w_input", "shape": [128, 1], "data": [...] }, ... ]
//! }
//! ```
//!
//! Parameters appear in the model's storage order. Floats are written with
//! shortest round-trip formatting, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, MapForecaster, Model, ModelError, SeriesForecaster};
use crate::autodiff::{ParameterSet, Tensor};

pub const WEIGHTS_FORMAT: &str = "robustcast-weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightFile {
    format: String,
    version: u32,
    architecture: Architecture,
    parameters: Vec<ParamRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Model {
    pub fn save_weights(&self, path: &Path) -> Result<(), ModelError> {
        let file = WeightFile {
            format: WEIGHTS_FORMAT.to_string(),
            version: WEIGHTS_VERSION,
            architecture: self.architecture(),
            parameters: self
                .params()
                .iter()
                .map(|(name, t)| ParamRecord {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&file).map_err(|e| ModelError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        fs::write(path, text).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a weight file and rebuilds the model it describes.
    pub fn from_weights_file(path: &Path) -> Result<Self, ModelError> {
        let file = read_file(path)?;
        let params = validate(path, &file)?;
        Ok(Model::from_parts(file.architecture, params))
    }

    /// Replaces this model's parameters with those in `path`; the file must
    /// describe the same architecture.
    pub fn load_weights(&mut self, path: &Path) -> Result<(), ModelError> {
        let file = read_file(path)?;
        let ours = self.architecture();
        if file.architecture.kind() != ours.kind() {
            return Err(ModelError::KindMismatch {
                path: path.to_path_buf(),
                expected: ours.kind(),
                found: file.architecture.kind(),
            });
        }
        if file.architecture != ours {
            return Err(ModelError::Format {
                path: path.to_path_buf(),
                reason: format!(
                    "architecture {:?} differs from model {:?}",
                    file.architecture, ours
                ),
            });
        }
        let params = validate(path, &file)?;
        *self.params_mut() = params;
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<WeightFile, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let format_err = |e: serde_json::Error| ModelError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(format_err)?;
    let header: Header = serde_json::from_value(value.clone()).map_err(format_err)?;
    if header.format != WEIGHTS_FORMAT {
        return Err(ModelError::Format {
            path: path.to_path_buf(),
            reason: format!("format tag {:?}", header.format),
        });
    }
    if header.version != WEIGHTS_VERSION {
        return Err(ModelError::Version {
            path: path.to_path_buf(),
            found: header.version,
            expected: WEIGHTS_VERSION,
        });
    }
    serde_json::from_value(value).map_err(format_err)
}

fn validate(path: &Path, file: &WeightFile) -> Result<ParameterSet, ModelError> {
    let layout = match &file.architecture {
        Architecture::Series(c) => SeriesForecaster::layout(c),
        Architecture::Maps(c) => MapForecaster::layout(c),
    };
    let param_err = |name: &str, reason: String| ModelError::Parameter {
        path: path.to_path_buf(),
        name: name.to_string(),
        reason,
    };
    if let Some(extra) = file
        .parameters
        .iter()
        .find(|r| !layout.iter().any(|(n, _)| *n == r.name))
    {
        return Err(param_err(
            &extra.name,
            "not part of the architecture".into(),
        ));
    }
    let mut params = ParameterSet::new();
    for (name, shape) in layout {
        let record = file
            .parameters
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| param_err(&name, "missing".into()))?;
        if record.shape != shape {
            return Err(param_err(
                &name,
                format!("shape {:?}, expected {:?}", record.shape, shape),
            ));
        }
        let expected: usize = shape.iter().product();
        if record.data.len() != expected {
            return Err(param_err(
                &name,
                format!(
                    "buffer holds {} values, expected {expected}",
                    record.data.len()
                ),
            ));
        }
        let tensor =
            Tensor::new(shape, record.data.clone()).map_err(|e| param_err(&name, e.to_string()))?;
        params
            .insert(name.clone(), tensor)
            .map_err(|e| param_err(&name, e.to_string()))?;
    }
    Ok(params)
}
