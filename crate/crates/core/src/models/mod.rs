//! Recurrent multi-step forecasters.
//!
//! All five architectures share a stacked-GRU encoder over the (normalized)
//! history and differ in how the final state becomes `h` values:
//!
//! | architecture | output path |
//! |--------------|-------------|
//! | `recursive`  | one next-value head, fed back through the encoder `h` times |
//! | `deepmo`     | `h` independent heads on the final state |
//! | `seqmo`      | GRU decoder unrolled `h` steps, one shared head |
//! | `polymo`     | `n+1` coefficient heads, polynomial evaluated over the window |
//! | `polyseqmo`  | GRU decoder over `n+1` coefficient slots, one head per slot |
//!
//! Every head emits logits over a [`BinSpec`]; decoding takes the argmax bin.

mod checkpoint;
mod ensemble;
mod infer;
mod network;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowConfig;
use crate::error::{Error, Result};
use crate::neural::{AffineParams, GruParams, Parameters, Tensor2};
use crate::polyfit::PolyCoeffs;
use crate::quantize::{BinSpec, CategoricalDist};
use crate::Scalar;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TensorRecord, CHECKPOINT_VERSION};
pub use ensemble::{ensemble_mean, Ensemble};
pub use infer::{
    forecast_deepmo, forecast_polymo, forecast_polyseqmo, forecast_recursive, forecast_seqmo,
};
pub use network::{loss_and_grad, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Recursive,
    DeepMo,
    SeqMo,
    PolyMo,
    PolySeqMo,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Recursive,
        Architecture::DeepMo,
        Architecture::SeqMo,
        Architecture::PolyMo,
        Architecture::PolySeqMo,
    ];

    pub fn is_poly(self) -> bool {
        matches!(self, Self::PolyMo | Self::PolySeqMo)
    }

    pub fn has_decoder(self) -> bool {
        matches!(self, Self::SeqMo | Self::PolySeqMo)
    }

    /// Number of categorical outputs trained per window.
    pub fn output_slots(self, horizon: usize, degree: usize) -> usize {
        if self.is_poly() {
            degree + 1
        } else {
            horizon
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::Recursive => "Recursive",
            Self::DeepMo => "DeepMO",
            Self::SeqMo => "SeqMO",
            Self::PolyMo => "PolyMO",
            Self::PolySeqMo => "PolySeqMO",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Recursive => "recursive",
            Self::DeepMo => "deepmo",
            Self::SeqMo => "seqmo",
            Self::PolyMo => "polymo",
            Self::PolySeqMo => "polyseqmo",
        };
        f.write_str(s)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "recursive" => Ok(Self::Recursive),
            "deepmo" => Ok(Self::DeepMo),
            "seqmo" => Ok(Self::SeqMo),
            "polymo" => Ok(Self::PolyMo),
            "polyseqmo" => Ok(Self::PolySeqMo),
            other => Err(Error::InvalidArgument(format!("unknown architecture {other:?}"))),
        }
    }
}

/// What the decoder consumes at each step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderInput {
    /// Previous decoded value (first step: last observed value).
    #[default]
    Feedback,
    /// Constant zero input: the decoder only unrolls its state.
    Zero,
}

impl FromStr for DecoderInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "feedback" => Ok(Self::Feedback),
            "zero" => Ok(Self::Zero),
            other => Err(Error::InvalidArgument(format!("unknown decoder input {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub layers: usize,
    pub hidden: usize,
    pub horizon: usize,
    /// Polynomial degree for the poly architectures.
    pub degree: usize,
    pub decoder_input: DecoderInput,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, layers: usize, hidden: usize) -> Self {
        Self {
            architecture,
            layers,
            hidden,
            horizon: 6,
            degree: 1,
            decoder_input: DecoderInput::Feedback,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("encoder needs at least one layer and unit".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if self.architecture.is_poly() && self.degree >= self.horizon {
            return Err(Error::InvalidArgument(format!(
                "polynomial degree {} must be below horizon {}",
                self.degree, self.horizon
            )));
        }
        Ok(())
    }

    pub fn output_slots(&self) -> usize {
        self.architecture.output_slots(self.horizon, self.degree)
    }
}

/// Affine input scaling `(v - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Normalizer<T> {
    pub offset: T,
    pub scale: T,
}

impl<T: Scalar> Normalizer<T> {
    pub fn identity() -> Self {
        Self {
            offset: T::zero(),
            scale: T::one(),
        }
    }

    pub fn apply(&self, v: T) -> T {
        (v - self.offset) / self.scale
    }
}

/// Encoder, optional decoder and output heads, visited in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub encoder: Vec<GruParams<T>>,
    pub decoder: Option<GruParams<T>>,
    pub heads: Vec<AffineParams<T>>,
}

impl<T: Scalar> Parameters<T> for Network<T> {
    fn tensors(&self) -> Vec<&Tensor2<T>> {
        let mut out: Vec<&Tensor2<T>> = self.encoder.iter().flat_map(|g| g.tensors()).collect();
        if let Some(d) = &self.decoder {
            out.extend(d.tensors());
        }
        out.extend(self.heads.iter().flat_map(|h| h.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        let mut out: Vec<&mut Tensor2<T>> =
            self.encoder.iter_mut().flat_map(|g| g.tensors_mut()).collect();
        if let Some(d) = &mut self.decoder {
            out.extend(d.tensors_mut());
        }
        out.extend(self.heads.iter_mut().flat_map(|h| h.tensors_mut()));
        out
    }
}

impl<T: Scalar> Network<T> {
    /// Stable names matching the order of [`Parameters::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        const GRU: [&str; 9] = ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"];
        let mut names = Vec::new();
        for l in 0..self.encoder.len() {
            names.extend(GRU.iter().map(|n| format!("encoder.{l}.{n}")));
        }
        if self.decoder.is_some() {
            names.extend(GRU.iter().map(|n| format!("decoder.{n}")));
        }
        for h in 0..self.heads.len() {
            names.push(format!("head.{h}.weight"));
            names.push(format!("head.{h}.bias"));
        }
        names
    }
}

/// A trained forecaster: weights plus everything needed to decode them.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterModel<T> {
    pub config: ModelConfig,
    pub net: Network<T>,
    pub normalizer: Normalizer<T>,
    pub value_spec: BinSpec<T>,
    /// One spec per coefficient `w_0..w_n`; empty for value architectures.
    pub coeff_specs: Vec<BinSpec<T>>,
    /// Windowing the model was trained under.
    pub window: WindowConfig,
}

impl<T: Scalar> ForecasterModel<T> {
    /// Randomly initialized model; uniform `±1/sqrt(hidden)` everywhere.
    pub fn init<R: Rng + ?Sized>(
        config: ModelConfig,
        value_spec: BinSpec<T>,
        coeff_specs: Vec<BinSpec<T>>,
        normalizer: Normalizer<T>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let encoder = (0..config.layers)
            .map(|l| GruParams::init(if l == 0 { 1 } else { h }, h, rng))
            .collect();
        let decoder = config.architecture.has_decoder().then(|| GruParams::init(1, h, rng));
        let heads = head_sizes(&config, &value_spec, &coeff_specs)?
            .into_iter()
            .map(|k| AffineParams::init(h, k, rng))
            .collect();
        let model = Self {
            config,
            net: Network {
                encoder,
                decoder,
                heads,
            },
            normalizer,
            value_spec,
            coeff_specs,
            window: WindowConfig {
                horizon: config.horizon,
                ..WindowConfig::default()
            },
        };
        model.validate()?;
        Ok(model)
    }

    /// Same layout as [`ForecasterModel::init`] with every weight zero.
    pub fn zeros(
        config: ModelConfig,
        value_spec: BinSpec<T>,
        coeff_specs: Vec<BinSpec<T>>,
        normalizer: Normalizer<T>,
    ) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut m = Self::init(config, value_spec, coeff_specs, normalizer, &mut rng)?;
        m.net = m.net.zeroed();
        Ok(m)
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Spec used to decode output slot `slot`.
    pub fn slot_spec(&self, slot: usize) -> &BinSpec<T> {
        if self.config.architecture.is_poly() {
            &self.coeff_specs[slot]
        } else {
            &self.value_spec
        }
    }

    /// Head feeding output slot `slot`.
    pub(crate) fn slot_head(&self, slot: usize) -> usize {
        match self.config.architecture {
            Architecture::Recursive | Architecture::SeqMo => 0,
            _ => slot,
        }
    }

    /// Structural consistency between weights, specs and architecture.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let bad = |m: String| Err(Error::Malformed(m));
        if self.net.encoder.len() != c.layers {
            return bad(format!("{} encoder layers, config says {}", self.net.encoder.len(), c.layers));
        }
        for (l, g) in self.net.encoder.iter().enumerate() {
            g.check_shapes()?;
            let input = if l == 0 { 1 } else { c.hidden };
            if g.input_size() != input || g.hidden_size() != c.hidden {
                return bad(format!("encoder layer {l} has shape {}x{}", g.input_size(), g.hidden_size()));
            }
        }
        match (&self.net.decoder, c.architecture.has_decoder()) {
            (Some(d), true) => {
                d.check_shapes()?;
                if d.input_size() != 1 || d.hidden_size() != c.hidden {
                    return bad("decoder shape does not match hidden size".into());
                }
            }
            (None, true) => return bad(format!("{} requires a decoder", c.architecture)),
            (Some(_), false) => return bad(format!("{} has no decoder", c.architecture)),
            (None, false) => {}
        }
        if c.architecture.is_poly() && self.coeff_specs.len() != c.degree + 1 {
            return bad(format!(
                "expected {} coefficient specs, found {}",
                c.degree + 1,
                self.coeff_specs.len()
            ));
        }
        let sizes = head_sizes(c, &self.value_spec, &self.coeff_specs)?;
        if sizes.len() != self.net.heads.len() {
            return bad(format!("expected {} output heads, found {}", sizes.len(), self.net.heads.len()));
        }
        for (i, (head, k)) in self.net.heads.iter().zip(sizes).enumerate() {
            head.check_shapes()?;
            if head.input_size() != c.hidden || head.output_size() != k {
                return bad(format!("head {i} is {}x{}, expected {}x{k}", head.input_size(), head.output_size(), c.hidden));
            }
        }
        Ok(())
    }
}

fn head_sizes<T: Scalar>(c: &ModelConfig, value: &BinSpec<T>, coeffs: &[BinSpec<T>]) -> Result<Vec<usize>> {
    Ok(match c.architecture {
        Architecture::Recursive | Architecture::SeqMo => vec![value.n_bins],
        Architecture::DeepMo => vec![value.n_bins; c.horizon],
        Architecture::PolyMo | Architecture::PolySeqMo => {
            if coeffs.len() != c.degree + 1 {
                return Err(Error::Malformed(format!(
                    "{} needs {} coefficient specs, got {}",
                    c.architecture,
                    c.degree + 1,
                    coeffs.len()
                )));
            }
            coeffs.iter().map(|s| s.n_bins).collect()
        }
    })
}

/// One multi-step forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forecast<T> {
    pub values: Vec<T>,
    /// Per output slot: per step for value models, per coefficient for
    /// polynomial models.
    pub dists: Option<Vec<CategoricalDist<T>>>,
    pub coeffs: Option<PolyCoeffs<T>>,
}

impl<T: Scalar> Forecast<T> {
    pub fn from_values(values: Vec<T>) -> Self {
        Self {
            values,
            dists: None,
            coeffs: None,
        }
    }
}

/// Anything that maps a history to `horizon()` values.
pub trait Forecaster<T: Scalar>: Sync {
    fn name(&self) -> String;

    fn horizon(&self) -> usize;

    fn forecast_batch(&self, histories: &[&[T]]) -> Result<Vec<Vec<T>>>;

    fn forecast_values(&self, history: &[T]) -> Result<Vec<T>> {
        let mut out = self.forecast_batch(&[history])?;
        Ok(out.pop().expect("one forecast per history"))
    }
}

impl<T: Scalar> Forecaster<T> for ForecasterModel<T> {
    fn name(&self) -> String {
        self.config.architecture.display_name().to_string()
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn forecast_batch(&self, histories: &[&[T]]) -> Result<Vec<Vec<T>>> {
        Ok(self
            .predict_batch(histories, false)?
            .into_iter()
            .map(|f| f.values)
            .collect())
    }
}

impl<T: Scalar, F: Forecaster<T> + ?Sized> Forecaster<T> for Box<F> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn horizon(&self) -> usize {
        (**self).horizon()
    }

    fn forecast_batch(&self, histories: &[&[T]]) -> Result<Vec<Vec<T>>> {
        (**self).forecast_batch(histories)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture_tags_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.to_string().parse::<Architecture>().unwrap(), a);
        }
        assert!("lstm".parse::<Architecture>().is_err());
    }

    #[test]
    fn degree_must_stay_below_horizon() {
        let mut c = ModelConfig::new(Architecture::PolyMo, 1, 4);
        c.degree = 6;
        assert!(c.validate().is_err());
        c.degree = 5;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn malformed_models_are_rejected() {
        let spec = BinSpec::<f64>::glucose();
        let cfg = ModelConfig::new(Architecture::DeepMo, 1, 3);
        let mut m = ForecasterModel::zeros(cfg, spec, vec![], Normalizer::identity()).unwrap();
        m.net.heads.pop();
        assert!(matches!(m.validate(), Err(Error::Malformed(_))));

        let cfg = ModelConfig::new(Architecture::PolyMo, 1, 3);
        assert!(ForecasterModel::zeros(cfg, spec, vec![], Normalizer::identity()).is_err());
    }
}
