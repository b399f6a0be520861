//! Mini-batch training with weighted multi-step cross-entropy and early
//! stopping on validation loss.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Window, WindowConfig};
use crate::error::{Error, Result};
use crate::eval::ape_window;
use crate::models::{loss_and_grad, Architecture, DecoderInput, ForecasterModel, ModelConfig, Normalizer, Sample};
use crate::neural::{adam_step, AdamConfig, AdamState, Parameters};
use crate::polyfit::fit_poly;
use crate::quantize::{coeff_bin_specs, BinSpec};
use crate::Scalar;

/// Input scaling applied before the encoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    None,
    /// Divide readings by 400 mg/dL.
    #[default]
    Div400,
    /// Subtract the training mean and divide by the training standard deviation.
    Standardize,
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Div400 => "div400",
            Self::Standardize => "standardize",
        })
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Self::None),
            "div400" => Ok(Self::Div400),
            "standardize" => Ok(Self::Standardize),
            other => Err(Error::InvalidArgument(format!("unknown normalization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub layers: usize,
    pub hidden: usize,
    pub horizon: usize,
    pub degree: usize,
    pub decoder_input: DecoderInput,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub b_w: f64,
    pub norm: NormMode,
    pub bins: usize,
    pub seed: u64,
    /// Also record validation APE each epoch (costs one decode pass).
    pub val_ape: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::SeqMo,
            layers: 2,
            hidden: 64,
            horizon: 6,
            degree: 1,
            decoder_input: DecoderInput::Feedback,
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 64,
            patience: 50,
            max_epochs: 1000,
            b_w: 1.0,
            norm: NormMode::Div400,
            bins: crate::quantize::DEFAULT_BINS,
            seed: 0,
            val_ape: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(0.0..=1.0).contains(&self.b_w) {
            return bad("b_w must lie in [0, 1]");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch cap must be positive");
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning rate and weight decay must be non-negative");
        }
        if self.bins < 2 {
            return bad("need at least 2 bins");
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            architecture: self.architecture,
            layers: self.layers,
            hidden: self.hidden,
            horizon: self.horizon,
            degree: self.degree,
            decoder_input: self.decoder_input,
        }
    }

    /// Per-slot loss weights: `loss_weights(b_w)` for value models, uniform
    /// over coefficients for polynomial models.
    pub fn slot_weights<T: Scalar>(&self) -> Result<Vec<T>> {
        if self.architecture.is_poly() {
            let k = self.degree + 1;
            Ok(vec![T::one() / T::lit(k as f64); k])
        } else {
            loss_weights(self.b_w, self.horizon)
        }
    }
}

/// `w_i ∝ b_w^(h-i)` for steps `i = 1..=h`, normalized to sum to one, with
/// `0^0 = 1`: `b_w = 0` puts all weight on the last step, `b_w = 1` is uniform.
pub fn loss_weights<T: Scalar>(b_w: f64, h: usize) -> Result<Vec<T>> {
    if !(0.0..=1.0).contains(&b_w) {
        return Err(Error::InvalidArgument(format!("b_w = {b_w} outside [0, 1]")));
    }
    if h == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let raw: Vec<f64> = (1..=h).map(|i| b_w.powi((h - i) as i32)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| T::lit(w / total)).collect())
}

/// Class index per output slot: each target value for value models, each
/// best-fit coefficient for polynomial models. Out-of-range values clamp.
pub fn make_targets<T: Scalar>(
    window: &Window,
    architecture: Architecture,
    degree: usize,
    value_spec: &BinSpec<T>,
    coeff_specs: &[BinSpec<T>],
) -> Result<Vec<usize>> {
    let target: Vec<T> = window.target_values();
    if !architecture.is_poly() {
        return Ok(target.iter().map(|&v| value_spec.value_to_bin(v)).collect());
    }
    if coeff_specs.len() != degree + 1 {
        return Err(Error::Malformed(format!(
            "degree {degree} needs {} coefficient specs, got {}",
            degree + 1,
            coeff_specs.len()
        )));
    }
    let fit = fit_poly(&target, degree)?;
    Ok(fit
        .coeffs
        .iter()
        .zip(coeff_specs)
        .map(|(&w, s)| s.value_to_bin(w))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_ape: Option<f64>,
}

/// Training history. Wall-clock time is kept out of the serialized form so
/// identical runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_params: usize,
    pub loss_weights: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Normalizer for `mode`; standardization uses every training input reading.
pub fn fit_normalizer<T: Scalar>(mode: NormMode, windows: &[Window]) -> Result<Normalizer<T>> {
    Ok(match mode {
        NormMode::None => Normalizer::identity(),
        NormMode::Div400 => Normalizer {
            offset: T::zero(),
            scale: T::lit(crate::quantize::GLUCOSE_MAX),
        },
        NormMode::Standardize => {
            let (mut n, mut s, mut ss) = (0f64, 0f64, 0f64);
            for w in windows {
                for &v in &w.input {
                    let v = v as f64;
                    n += 1.0;
                    s += v;
                    ss += v * v;
                }
            }
            if n == 0.0 {
                return Err(Error::Empty("training set"));
            }
            let mean = s / n;
            let sd = (ss / n - mean * mean).max(0.0).sqrt();
            Normalizer {
                offset: T::lit(mean),
                scale: T::lit(if sd > 0.0 { sd } else { 1.0 }),
            }
        }
    })
}

pub fn make_samples<T: Scalar>(m: &ForecasterModel<T>, windows: &[Window]) -> Result<Vec<Sample<T>>> {
    windows
        .iter()
        .map(|w| {
            if w.input.is_empty() {
                return Err(Error::Empty("window history"));
            }
            Ok(Sample {
                history: w.input_values(),
                classes: make_targets(w, m.config.architecture, m.config.degree, &m.value_spec, &m.coeff_specs)?,
            })
        })
        .collect()
}

/// Mean per-sample loss over `samples`, evaluated in fixed-size chunks.
pub fn dataset_loss<T: Scalar>(m: &ForecasterModel<T>, samples: &[Sample<T>], weights: &[T], chunk: usize) -> T {
    if samples.is_empty() {
        return T::zero();
    }
    let mut total = T::zero();
    for c in samples.chunks(chunk.max(1)) {
        let refs: Vec<&Sample<T>> = c.iter().collect();
        let (loss, _) = loss_and_grad(m, &refs, weights, false);
        total += loss * T::lit(c.len() as f64);
    }
    total / T::lit(samples.len() as f64)
}

/// Mean window APE of `m` on `windows`.
pub fn dataset_ape<T: Scalar>(m: &ForecasterModel<T>, windows: &[Window]) -> Result<f64> {
    let mut total = 0.0;
    for c in windows.chunks(256) {
        let hist: Vec<Vec<T>> = c.iter().map(|w| w.input_values()).collect();
        let refs: Vec<&[T]> = hist.iter().map(|h| h.as_slice()).collect();
        for (f, w) in m.predict_batch(&refs, false)?.iter().zip(c) {
            total += ape_window(&f.values, &w.target_values::<T>())?.as_f64();
        }
    }
    Ok(total / windows.len().max(1) as f64)
}

/// Fresh model sized for `cfg`, with specs and normalizer fitted on `train`.
pub fn init_model<T: Scalar>(cfg: &TrainConfig, train: &[Window], rng: &mut ChaCha8Rng) -> Result<ForecasterModel<T>> {
    let value_spec = BinSpec::new(
        T::lit(crate::quantize::GLUCOSE_MIN),
        T::lit(crate::quantize::GLUCOSE_MAX),
        cfg.bins,
    )?;
    let coeff_specs = if cfg.architecture.is_poly() {
        let targets: Vec<Vec<T>> = train.iter().map(|w| w.target_values()).collect();
        let mut specs = coeff_bin_specs::<T, _>(&targets, cfg.degree)?;
        for s in &mut specs {
            s.n_bins = cfg.bins;
        }
        specs
    } else {
        Vec::new()
    };
    let normalizer = fit_normalizer(cfg.norm, train)?;
    let mut m = ForecasterModel::init(cfg.model_config(), value_spec, coeff_specs, normalizer, rng)?;
    m.window = WindowConfig {
        horizon: cfg.horizon,
        ..m.window
    };
    Ok(m)
}

pub fn train_model<T: Scalar>(
    cfg: &TrainConfig,
    train: &[Window],
    validation: &[Window],
) -> Result<(ForecasterModel<T>, TrainReport)> {
    train_model_with(cfg, train, validation, |_| {})
}

/// [`train_model`] with a callback after every epoch.
pub fn train_model_with<T: Scalar>(
    cfg: &TrainConfig,
    train: &[Window],
    validation: &[Window],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ForecasterModel<T>, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation windows"));
    }
    if let Some(w) = train.iter().chain(validation).find(|w| w.target.len() != cfg.horizon) {
        return Err(Error::InvalidArgument(format!(
            "window has {} targets, config horizon is {}",
            w.target.len(),
            cfg.horizon
        )));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model: ForecasterModel<T> = init_model(cfg, train, &mut rng)?;
    let weights = cfg.slot_weights::<T>()?;
    let train_samples = make_samples(&model, train)?;
    let val_samples = make_samples(&model, validation)?;

    let adam = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut opt = AdamState::new(&model.net, adam);
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut best_net = model.net.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let refs: Vec<&Sample<T>> = batch.iter().map(|&i| &train_samples[i]).collect();
            let (loss, grads) = loss_and_grad(&model, &refs, &weights, true);
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            adam_step(&mut model.net, &grads.expect("gradient requested"), &mut opt);
            epoch_loss += loss * batch.len() as f64;
        }
        if !model.net.is_finite() {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
        let val_loss = dataset_loss(&model, &val_samples, &weights, 512).as_f64();
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        let val_ape = if cfg.val_ape { Some(dataset_ape(&model, validation)?) } else { None };
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / train_samples.len() as f64,
            val_loss,
            val_ape,
        };
        on_epoch(&record);
        epochs.push(record);
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_net = model.net.clone();
        } else if epoch - best_epoch >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    model.net = best_net;

    let report = TrainReport {
        config: *cfg,
        n_train: train.len(),
        n_validation: validation.len(),
        n_params: model.net.num_params(),
        loss_weights: weights.iter().map(|w| w.as_f64()).collect(),
        epochs,
        best_epoch,
        best_val_loss: best_val,
        stopped_early,
        checkpoint: None,
        wall_clock: started.elapsed(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{EventFlags, Provenance};

    fn window(input: Vec<u16>, target: Vec<u16>) -> Window {
        Window {
            input,
            target,
            flags: EventFlags::default(),
            provenance: Provenance {
                patient_id: "P".into(),
                session_id: "S".into(),
                segment: 0,
                offset: 0,
            },
        }
    }

    #[test]
    fn weight_endpoints() {
        assert_eq!(loss_weights::<f64>(1.0, 6).unwrap(), vec![1.0 / 6.0; 6]);
        assert_eq!(loss_weights::<f64>(0.0, 6).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(loss_weights::<f64>(1.5, 6).is_err());
        assert!(loss_weights::<f64>(-0.1, 6).is_err());
    }

    #[test]
    fn half_weights_match_direct_normalization() {
        let raw = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0];
        let s: f64 = raw.iter().sum();
        let w = loss_weights::<f64>(0.5, 6).unwrap();
        for (a, b) in w.iter().zip(raw) {
            assert!((a - b / s).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_grow(b in 0.0f64..=1.0, h in 1usize..12) {
            let w = loss_weights::<f64>(b, h).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for p in w.windows(2) {
                prop_assert!(p[0] <= p[1]);
            }
        }
    }

    #[test]
    fn value_targets_are_bins() {
        let w = window(vec![100; 10], vec![100; 6]);
        let spec = BinSpec::<f64>::glucose();
        assert_eq!(make_targets(&w, Architecture::DeepMo, 1, &spec, &[]).unwrap(), vec![60; 6]);
    }

    #[test]
    fn poly_targets_round_trip_within_a_bin() {
        let line: Vec<u16> = (0..6).map(|i| 100 + 2 * i).collect();
        let ws = vec![window(vec![100; 10], line.clone()), window(vec![100; 10], vec![60, 70, 80, 90, 100, 110]),
                      window(vec![100; 10], vec![300, 290, 280, 270, 260, 250])];
        let targets: Vec<Vec<f64>> = ws.iter().map(|w| w.target_values()).collect();
        let specs = coeff_bin_specs::<f64, _>(&targets, 1).unwrap();
        let spec = BinSpec::glucose();
        let k = make_targets(&ws[0], Architecture::PolyMo, 1, &spec, &specs).unwrap();
        assert_eq!(k.len(), 2);
        let w0 = specs[0].bin_to_value(k[0]).unwrap();
        let w1 = specs[1].bin_to_value(k[1]).unwrap();
        assert!((w0 - 100.0).abs() <= specs[0].width());
        assert!((w1 - 2.0).abs() <= specs[1].width());

        let k0 = make_targets(&ws[0], Architecture::PolyMo, 0, &spec, &coeff_bin_specs::<f64, _>(&targets, 0).unwrap()).unwrap();
        let s0 = coeff_bin_specs::<f64, _>(&targets, 0).unwrap();
        assert_eq!(k0, vec![s0[0].value_to_bin(105.0)]);
    }

    fn sawtooth(len: usize) -> Vec<u16> {
        (0..len).map(|i| 100 + 10 * (i % 6) as u16).collect()
    }

    fn sawtooth_windows(n: usize, phase: usize) -> Vec<Window> {
        let s = sawtooth(n + 16 + phase);
        (0..n).map(|i| window(s[phase + i..phase + i + 10].to_vec(), s[phase + i + 10..phase + i + 16].to_vec())).collect()
    }

    fn tiny(arch: Architecture) -> TrainConfig {
        TrainConfig {
            architecture: arch,
            layers: 1,
            hidden: 8,
            batch_size: 8,
            patience: 5,
            max_epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_only_decays() {
        let ws = sawtooth_windows(10, 0);
        let mut cfg = tiny(Architecture::DeepMo);
        cfg.lr = 0.0;
        cfg.max_epochs = 1;
        let (m, report) = train_model::<f64>(&cfg, &ws, &ws).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init: ForecasterModel<f64> = init_model(&cfg, &ws, &mut rng).unwrap();
        assert_eq!(m.net, init.net);
        let samples = make_samples(&init, &ws).unwrap();
        let w = cfg.slot_weights::<f64>().unwrap();
        assert_eq!(report.epochs[0].val_loss, dataset_loss(&init, &samples, &w, 512));
    }

    #[test]
    fn sawtooth_beats_uniform_entropy() {
        let train = sawtooth_windows(60, 0);
        let val = sawtooth_windows(12, 3);
        let mut cfg = tiny(Architecture::DeepMo);
        cfg.lr = 1e-2;
        cfg.max_epochs = 200;
        cfg.patience = 200;
        let (_, report) = train_model::<f64>(&cfg, &train, &val).unwrap();
        assert!(report.best_val_loss < (361f64).ln(), "best {}", report.best_val_loss);
        let best = report.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(best, report.best_val_loss);
    }

    #[test]
    fn same_seed_same_report() {
        let train = sawtooth_windows(20, 0);
        let val = sawtooth_windows(6, 2);
        for arch in Architecture::ALL {
            let cfg = tiny(arch);
            let (a, ra) = train_model::<f64>(&cfg, &train, &val).unwrap();
            let (b, rb) = train_model::<f64>(&cfg, &train, &val).unwrap();
            assert_eq!(a, b);
            assert_eq!(ra.to_json().unwrap(), rb.to_json().unwrap());
            assert!(ra.best_epoch <= ra.epochs.len());
        }
    }

    #[test]
    fn early_stopping_restores_best() {
        let train = sawtooth_windows(30, 0);
        let val = sawtooth_windows(8, 1);
        let mut cfg = tiny(Architecture::SeqMo);
        cfg.lr = 5e-2;
        cfg.max_epochs = 40;
        cfg.patience = 3;
        let (m, report) = train_model::<f64>(&cfg, &train, &val).unwrap();
        let samples = make_samples(&m, &val).unwrap();
        let loss = dataset_loss(&m, &samples, &cfg.slot_weights::<f64>().unwrap(), 512);
        assert!((loss - report.best_val_loss).abs() < 1e-12);
        assert!(report.epochs.iter().all(|e| report.best_val_loss <= e.val_loss));
    }

    #[test]
    fn epoch_loss_is_order_invariant() {
        let ws = sawtooth_windows(40, 0);
        let cfg = tiny(Architecture::PolySeqMo);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m: ForecasterModel<f64> = init_model(&cfg, &ws, &mut rng).unwrap();
        let w = cfg.slot_weights::<f64>().unwrap();
        let mut samples = make_samples(&m, &ws).unwrap();
        let a = dataset_loss(&m, &samples, &w, 7);
        samples.shuffle(&mut rng);
        let b = dataset_loss(&m, &samples, &w, 7);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn uniform_weights_equal_plain_mean() {
        let ws = sawtooth_windows(9, 0);
        let cfg = tiny(Architecture::DeepMo);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m: ForecasterModel<f64> = init_model(&cfg, &ws, &mut rng).unwrap();
        let samples = make_samples(&m, &ws).unwrap();
        let uniform = dataset_loss(&m, &samples, &loss_weights::<f64>(1.0, 6).unwrap(), 64);
        let mut plain = 0.0;
        for i in 0..6 {
            let mut one_hot = vec![0.0; 6];
            one_hot[i] = 1.0;
            plain += dataset_loss(&m, &samples, &one_hot, 64) / 6.0;
        }
        assert!((uniform - plain).abs() < 1e-12);
    }

    #[test]
    fn bad_configs_error() {
        let ws = sawtooth_windows(5, 0);
        let mut cfg = tiny(Architecture::DeepMo);
        cfg.b_w = 2.0;
        assert!(train_model::<f64>(&cfg, &ws, &ws).is_err());
        let cfg = tiny(Architecture::DeepMo);
        assert!(matches!(train_model::<f64>(&cfg, &[], &ws), Err(Error::Empty(_))));
        assert!(matches!(train_model::<f64>(&cfg, &ws, &[]), Err(Error::Empty(_))));
    }
}
