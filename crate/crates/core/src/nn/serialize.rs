//! Versioned JSON parameter files.
//!
//! A file is a header plus an array of `(name, shape, row-major values)`
//! records. MLPs are stored as `<prefix>.<layer>.weight` / `.bias` tensors
//! with their activations listed under `meta["<prefix>.activations"]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Dense, Mlp};
use super::tape::Mat;
use crate::error::{Error, Result};

pub const PARAM_FORMAT: &str = "fcsrl-params";
pub const PARAM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<TensorRecord>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Default for ParamFile {
    fn default() -> Self {
        Self {
            format: PARAM_FORMAT.to_string(),
            version: PARAM_VERSION,
            tensors: Vec::new(),
            meta: BTreeMap::new(),
        }
    }
}

impl ParamFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_matrix(&mut self, name: impl Into<String>, m: &Mat) {
        self.tensors.push(TensorRecord {
            name: name.into(),
            shape: vec![m.nrows(), m.ncols()],
            values: m.iter().copied().collect(),
        });
    }

    pub fn matrix(&self, name: &str) -> Result<Mat> {
        let rec = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
        if rec.shape.len() != 2 {
            return Err(Error::Format(format!("tensor {name} is not 2-D")));
        }
        Mat::from_shape_vec((rec.shape[0], rec.shape[1]), rec.values.clone())
            .map_err(|e| Error::Format(format!("tensor {name}: {e}")))
    }

    pub fn push_mlp(&mut self, prefix: &str, mlp: &Mlp) {
        let acts: Vec<Activation> = mlp.layers().iter().map(|l| l.activation).collect();
        for (i, layer) in mlp.layers().iter().enumerate() {
            self.push_matrix(format!("{prefix}.{i}.weight"), &layer.weight);
            self.push_matrix(format!("{prefix}.{i}.bias"), &layer.bias);
        }
        self.meta.insert(
            format!("{prefix}.activations"),
            serde_json::to_value(acts).expect("activations serialize"),
        );
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let acts: Vec<Activation> = self
            .meta
            .get(&format!("{prefix}.activations"))
            .ok_or_else(|| Error::Format(format!("missing activations for {prefix}")))
            .and_then(|v| serde_json::from_value(v.clone()).map_err(Error::from))?;
        let layers = acts
            .into_iter()
            .enumerate()
            .map(|(i, activation)| {
                Ok(Dense {
                    weight: self.matrix(&format!("{prefix}.{i}.weight"))?,
                    bias: self.matrix(&format!("{prefix}.{i}.bias"))?,
                    activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers)
    }

    pub fn set_meta(&mut self, key: &str, value: impl Serialize) {
        self.meta
            .insert(key.to_string(), serde_json::to_value(value).expect("meta serialize"));
    }

    pub fn meta<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Format(format!("missing meta key {key}")))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ParamFile = serde_json::from_str(s)?;
        if f.format != PARAM_FORMAT {
            return Err(Error::Format(format!("unexpected format tag {:?}", f.format)));
        }
        if f.version != PARAM_VERSION {
            return Err(Error::Format(format!("unsupported version {}", f.version)));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
