//! JSON checkpoints.
//!
//! ```text
//! {
//!   "format": "glucast-checkpoint",
//!   "version": 1,
//!   "scalar": "f64",
//!   "config": { architecture, layers, hidden, horizon, degree, decoder_input },
//!   "normalizer": { offset, scale },
//!   "value_spec": { min_value, max_value, n_bins },
//!   "coeff_specs": [ ... ],
//!   "window": { min_history, horizon, stride, max_history },
//!   "tensors": [ { "name": "encoder.0.w_z", "rows": 1, "cols": 64, "data": [...] }, ... ]
//! }
//! ```
//!
//! Tensor data is row-major. Names follow [`Network::tensor_names`]; the
//! architecture tag decides which names must be present.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ForecasterModel, ModelConfig, Normalizer};
use crate::data::WindowConfig;
use crate::error::{Error, Result};
use crate::neural::Parameters;
use crate::quantize::BinSpec;
use crate::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "glucast-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TensorRecord<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub config: ModelConfig,
    pub normalizer: Normalizer<T>,
    pub value_spec: BinSpec<T>,
    pub coeff_specs: Vec<BinSpec<T>>,
    pub window: WindowConfig,
    pub tensors: Vec<TensorRecord<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_model(m: &ForecasterModel<T>) -> Self {
        let tensors = m
            .net
            .tensor_names()
            .into_iter()
            .zip(m.net.tensors())
            .map(|(name, t)| TensorRecord {
                name,
                rows: t.nrows(),
                cols: t.ncols(),
                data: t.iter().copied().collect(),
            })
            .collect();
        Self {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            scalar: T::TAG.into(),
            config: m.config,
            normalizer: m.normalizer,
            value_spec: m.value_spec,
            coeff_specs: m.coeff_specs.clone(),
            window: m.window,
            tensors,
        }
    }

    pub fn into_model(self) -> Result<ForecasterModel<T>> {
        if self.format != FORMAT {
            return Err(Error::Mismatch(format!("not a checkpoint (format {:?})", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Mismatch(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.scalar != T::TAG {
            return Err(Error::Mismatch(format!(
                "checkpoint stores {} parameters, loader expects {}",
                self.scalar,
                T::TAG
            )));
        }
        let mut m = ForecasterModel::zeros(self.config, self.value_spec, self.coeff_specs, self.normalizer)?;
        m.window = self.window;
        let names = m.net.tensor_names();
        if names.len() != self.tensors.len() {
            return Err(Error::Mismatch(format!(
                "{} expects {} tensors, checkpoint has {}",
                self.config.architecture,
                names.len(),
                self.tensors.len()
            )));
        }
        for ((name, slot), rec) in names.iter().zip(m.net.tensors_mut()).zip(self.tensors) {
            if *name != rec.name {
                return Err(Error::Mismatch(format!("expected tensor {name}, found {}", rec.name)));
            }
            if slot.dim() != (rec.rows, rec.cols) {
                return Err(Error::Mismatch(format!(
                    "{name} is {}x{}, expected {}x{}",
                    rec.rows,
                    rec.cols,
                    slot.nrows(),
                    slot.ncols()
                )));
            }
            *slot = Array2::from_shape_vec((rec.rows, rec.cols), rec.data)
                .map_err(|e| Error::Mismatch(format!("{name}: {e}")))?;
        }
        if !m.net.is_finite() {
            return Err(Error::Malformed("non-finite parameter in checkpoint".into()));
        }
        m.validate()?;
        Ok(m)
    }
}

pub fn save_checkpoint<T: Scalar>(m: &ForecasterModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &Checkpoint::from_model(m))?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ForecasterModel<T>> {
    let ck: Checkpoint<T> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    ck.into_model()
}
