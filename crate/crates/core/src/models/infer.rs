use ndarray::Array2;

use super::{Architecture, DecoderInput, Forecast, ForecasterModel};
use crate::error::{Error, Result};
use crate::neural::{softmax, Tensor2};
use crate::polyfit::{eval_poly, PolyCoeffs};
use crate::quantize::{argmax, BinSpec, CategoricalDist};
use crate::Scalar;

struct Decoded<T> {
    values: Vec<T>,
    dists: Option<Vec<CategoricalDist<T>>>,
}

fn decode_rows<T: Scalar>(logits: &Tensor2<T>, spec: &BinSpec<T>, with_dists: bool) -> Decoded<T> {
    let mut values = Vec::with_capacity(logits.nrows());
    let mut dists = with_dists.then(Vec::new);
    for row in logits.rows() {
        let row = row.to_vec();
        values.push(spec.center(argmax(&row)));
        if let Some(d) = dists.as_mut() {
            d.push(CategoricalDist::new(softmax(&row)).expect("softmax is a distribution"));
        }
    }
    Decoded { values, dists }
}

fn column<T: Scalar>(v: Vec<T>) -> Tensor2<T> {
    let n = v.len();
    Array2::from_shape_vec((n, 1), v).expect("column shape")
}

impl<T: Scalar> ForecasterModel<T> {
    fn check_histories(histories: &[&[T]]) -> Result<()> {
        for h in histories {
            if h.is_empty() {
                return Err(Error::Empty("history"));
            }
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite history value".into()));
            }
        }
        Ok(())
    }

    /// Runs the encoder stack over left-padded histories; returns the state
    /// of every layer after the last step.
    fn encode_states(&self, histories: &[&[T]]) -> Vec<Tensor2<T>> {
        let b = histories.len();
        let hidden = self.config.hidden;
        let len = histories.iter().map(|h| h.len()).max().unwrap_or(0);
        let mut states = vec![Array2::<T>::zeros((b, hidden)); self.config.layers];
        for t in 0..len {
            let live: Vec<bool> = histories.iter().map(|h| t >= len - h.len()).collect();
            let x = column(
                histories
                    .iter()
                    .zip(&live)
                    .map(|(h, &on)| if on { self.normalizer.apply(h[t - (len - h.len())]) } else { T::zero() })
                    .collect(),
            );
            let all_live = live.iter().all(|&l| l);
            let mut x = x;
            for (layer, state) in self.net.encoder.iter().zip(states.iter_mut()) {
                let (mut out, _) = layer.step_cached(x, state.clone());
                if !all_live {
                    for (r, &on) in live.iter().enumerate() {
                        if !on {
                            out.row_mut(r).assign(&state.row(r));
                        }
                    }
                }
                *state = out.clone();
                x = out;
            }
        }
        states
    }

    fn feed(&self, states: &mut [Tensor2<T>], values: &[T]) {
        let mut x = column(values.iter().map(|&v| self.normalizer.apply(v)).collect());
        for (layer, state) in self.net.encoder.iter().zip(states.iter_mut()) {
            let (out, _) = layer.step_cached(x, state.clone());
            *state = out.clone();
            x = out;
        }
    }

    /// Final top-layer hidden state after reading the whole history.
    pub fn encode(&self, history: &[T]) -> Result<Vec<T>> {
        Self::check_histories(&[history])?;
        let states = self.encode_states(&[history]);
        Ok(states.last().expect("at least one layer").row(0).to_vec())
    }

    /// Forecast with per-slot distributions attached.
    pub fn predict(&self, history: &[T]) -> Result<Forecast<T>> {
        Ok(self.predict_batch(&[history], true)?.pop().expect("one forecast"))
    }

    pub fn predict_batch(&self, histories: &[&[T]], with_dists: bool) -> Result<Vec<Forecast<T>>> {
        self.validate()?;
        Self::check_histories(histories)?;
        let b = histories.len();
        if b == 0 {
            return Ok(Vec::new());
        }
        let h = self.config.horizon;
        let arch = self.config.architecture;
        let mut states = self.encode_states(histories);
        let top = states.last().expect("at least one layer").clone();
        let last_obs: Vec<T> = histories.iter().map(|s| *s.last().expect("non-empty")).collect();

        // slots[i] -> decoded values over the batch
        let mut slots: Vec<Decoded<T>> = Vec::new();
        match arch {
            Architecture::Recursive => {
                for i in 0..h {
                    let top = states.last().expect("layer");
                    let d = decode_rows(&self.net.heads[0].forward(top), &self.value_spec, with_dists);
                    if i + 1 < h {
                        self.feed(&mut states, &d.values);
                    }
                    slots.push(d);
                }
            }
            Architecture::DeepMo | Architecture::PolyMo => {
                for (j, head) in self.net.heads.iter().enumerate() {
                    slots.push(decode_rows(&head.forward(&top), self.slot_spec(j), with_dists));
                }
            }
            Architecture::SeqMo | Architecture::PolySeqMo => {
                let dec = self.net.decoder.as_ref().expect("validated decoder");
                let n_slots = self.config.output_slots();
                let mut d = top;
                let mut input: Vec<T> = match self.config.decoder_input {
                    DecoderInput::Feedback => last_obs.iter().map(|&v| self.normalizer.apply(v)).collect(),
                    DecoderInput::Zero => vec![T::zero(); b],
                };
                for j in 0..n_slots {
                    let (next, _) = dec.step_cached(column(input), d);
                    d = next;
                    let spec = self.slot_spec(j);
                    let out = decode_rows(&self.net.heads[self.slot_head(j)].forward(&d), spec, with_dists);
                    input = match self.config.decoder_input {
                        DecoderInput::Zero => vec![T::zero(); b],
                        DecoderInput::Feedback if arch.is_poly() => out.values.iter().map(|&w| spec.unit(w)).collect(),
                        DecoderInput::Feedback => out.values.iter().map(|&v| self.normalizer.apply(v)).collect(),
                    };
                    slots.push(out);
                }
            }
        }

        let mut forecasts = Vec::with_capacity(b);
        for r in 0..b {
            let per_slot: Vec<T> = slots.iter().map(|s| s.values[r]).collect();
            let dists = with_dists.then(|| {
                slots
                    .iter_mut()
                    .map(|s| s.dists.as_mut().expect("requested")[r].clone())
                    .collect()
            });
            let (values, coeffs) = if arch.is_poly() {
                let coeffs = PolyCoeffs::new(per_slot)?;
                let values = eval_poly(&coeffs, h).into_iter().map(|v| self.value_spec.clamp(v)).collect();
                (values, Some(coeffs))
            } else {
                (per_slot, None)
            };
            forecasts.push(Forecast { values, dists, coeffs });
        }
        Ok(forecasts)
    }

    /// Polynomial output before clamping to the value range.
    pub fn unclamped_poly(&self, history: &[T]) -> Result<Vec<T>> {
        let f = self.predict(history)?;
        let coeffs = f
            .coeffs
            .ok_or_else(|| Error::Malformed(format!("{} does not predict coefficients", self.config.architecture)))?;
        Ok(eval_poly(&coeffs, self.config.horizon))
    }
}

fn expect_arch<T: Scalar>(m: &ForecasterModel<T>, arch: Architecture) -> Result<()> {
    if m.config.architecture != arch {
        return Err(Error::Malformed(format!(
            "model is {}, not {arch}",
            m.config.architecture
        )));
    }
    Ok(())
}

/// Single-step head applied `h` times, feeding each decoded value back.
pub fn forecast_recursive<T: Scalar>(m: &ForecasterModel<T>, history: &[T]) -> Result<Forecast<T>> {
    expect_arch(m, Architecture::Recursive)?;
    m.predict(history)
}

/// One head per step on the shared final state.
pub fn forecast_deepmo<T: Scalar>(m: &ForecasterModel<T>, history: &[T]) -> Result<Forecast<T>> {
    expect_arch(m, Architecture::DeepMo)?;
    m.predict(history)
}

/// Decoder unrolled from the encoder state, shared output head.
pub fn forecast_seqmo<T: Scalar>(m: &ForecasterModel<T>, history: &[T]) -> Result<Forecast<T>> {
    expect_arch(m, Architecture::SeqMo)?;
    m.predict(history)
}

/// One head per polynomial coefficient; the forecast is the evaluated
/// polynomial, clamped to the value range.
pub fn forecast_polymo<T: Scalar>(m: &ForecasterModel<T>, history: &[T]) -> Result<Forecast<T>> {
    expect_arch(m, Architecture::PolyMo)?;
    m.predict(history)
}

/// Decoder unrolled over the coefficient slots `w_0..w_n`.
pub fn forecast_polyseqmo<T: Scalar>(m: &ForecasterModel<T>, history: &[T]) -> Result<Forecast<T>> {
    expect_arch(m, Architecture::PolySeqMo)?;
    m.predict(history)
}
