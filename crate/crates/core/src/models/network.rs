//! Training-time unroll of one mini-batch and its reverse pass.
//!
//! Histories of different lengths are left-padded; padded steps are masked
//! so every sample's encoder sees exactly its own history and all samples
//! end on the same step.

use ndarray::{Array2, Zip};

use super::{Architecture, DecoderInput, ForecasterModel, Network};
use crate::neural::{softmax_cross_entropy_rows, GruCache, Parameters, Tensor2};
use crate::Scalar;

/// A training example: raw history and one class index per output slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub history: Vec<T>,
    pub classes: Vec<usize>,
}

struct Inputs<T> {
    enc: Vec<Tensor2<T>>,
    masks: Vec<Option<Tensor2<T>>>,
    /// Encoder step whose top state feeds output slot `i` (recursive only).
    last_input_step: usize,
    dec: Vec<Tensor2<T>>,
}

fn column<T: Scalar>(values: impl Iterator<Item = T>, rows: usize) -> Tensor2<T> {
    let v: Vec<T> = values.collect();
    Array2::from_shape_vec((rows, 1), v).expect("column shape")
}

fn build_inputs<T: Scalar>(m: &ForecasterModel<T>, batch: &[&Sample<T>]) -> Inputs<T> {
    let b = batch.len();
    let arch = m.config.architecture;
    let norm = |v: T| m.normalizer.apply(v);
    let len_in = batch.iter().map(|s| s.history.len()).max().unwrap_or(0);

    let mut enc = Vec::new();
    let mut masks = Vec::new();
    for t in 0..len_in {
        let mut all = true;
        let x = column(
            batch.iter().map(|s| {
                let pad = len_in - s.history.len();
                if t < pad {
                    all = false;
                    T::zero()
                } else {
                    norm(s.history[t - pad])
                }
            }),
            b,
        );
        let mask = (!all).then(|| {
            column(
                batch
                    .iter()
                    .map(|s| if t < len_in - s.history.len() { T::zero() } else { T::one() }),
                b,
            )
        });
        enc.push(x);
        masks.push(mask);
    }

    // teacher forcing: true targets stand in for decoded values
    let slots = m.config.output_slots();
    if arch == Architecture::Recursive {
        for i in 0..slots.saturating_sub(1) {
            enc.push(column(batch.iter().map(|s| norm(m.value_spec.center(s.classes[i]))), b));
            masks.push(None);
        }
    }

    let mut dec = Vec::new();
    if arch.has_decoder() {
        for i in 0..slots {
            let x = match m.config.decoder_input {
                DecoderInput::Zero => Array2::zeros((b, 1)),
                DecoderInput::Feedback if i == 0 => {
                    column(batch.iter().map(|s| norm(*s.history.last().expect("non-empty history"))), b)
                }
                DecoderInput::Feedback => {
                    let prev = m.slot_spec(i - 1);
                    column(
                        batch.iter().map(|s| {
                            let v = prev.center(s.classes[i - 1]);
                            if arch.is_poly() {
                                prev.unit(v)
                            } else {
                                norm(v)
                            }
                        }),
                        b,
                    )
                }
            };
            dec.push(x);
        }
    }

    Inputs {
        enc,
        masks,
        last_input_step: len_in.saturating_sub(1),
        dec,
    }
}

fn blend<T: Scalar>(mask: &Tensor2<T>, new: &Tensor2<T>, old: &Tensor2<T>) -> Tensor2<T> {
    let mut out = new.clone();
    Zip::from(&mut out).and(old).and_broadcast(mask).for_each(|o, &p, &m| {
        if m == T::zero() {
            *o = p;
        }
    });
    out
}

fn zero_rows<T: Scalar>(mask: &Tensor2<T>, g: &Tensor2<T>, keep_masked: bool) -> Tensor2<T> {
    let mut out = g.clone();
    Zip::from(&mut out).and_broadcast(mask).for_each(|o, &m| {
        let masked = m == T::zero();
        if masked != keep_masked {
            *o = T::zero();
        }
    });
    out
}

/// Mean weighted cross-entropy of a batch and, when `want_grad`, its
/// gradient with respect to every network parameter.
///
/// `weights[i]` scales the loss of output slot `i` (a step for value
/// models, a coefficient for polynomial models).
pub fn loss_and_grad<T: Scalar>(
    m: &ForecasterModel<T>,
    batch: &[&Sample<T>],
    weights: &[T],
    want_grad: bool,
) -> (T, Option<Network<T>>) {
    let b = batch.len();
    let arch = m.config.architecture;
    let hidden = m.config.hidden;
    let layers = m.config.layers;
    let slots = m.config.output_slots();
    debug_assert_eq!(weights.len(), slots);
    let inputs = build_inputs(m, batch);
    let steps = inputs.enc.len();

    // encoder forward
    let mut state: Vec<Tensor2<T>> = vec![Array2::zeros((b, hidden)); layers];
    let mut caches: Vec<Vec<GruCache<T>>> = Vec::with_capacity(steps);
    let mut tops: Vec<Tensor2<T>> = Vec::with_capacity(steps);
    for (x, mask) in inputs.enc.iter().zip(&inputs.masks) {
        let mut x = x.clone();
        let mut step_caches = Vec::with_capacity(layers);
        for (l, layer) in m.net.encoder.iter().enumerate() {
            let prev = std::mem::replace(&mut state[l], Array2::zeros((0, 0)));
            let (out, cache) = layer.step_cached(x, prev);
            let out = match mask {
                Some(mask) => blend(mask, &out, cache.h_prev()),
                None => out,
            };
            step_caches.push(cache);
            state[l] = out.clone();
            x = out;
        }
        caches.push(step_caches);
        tops.push(x);
    }
    let final_top = tops.last().expect("at least one encoder step").clone();

    // decoder forward
    let mut dec_caches = Vec::new();
    let mut dec_states = Vec::new();
    if let Some(dec) = &m.net.decoder {
        let mut d = final_top.clone();
        for x in &inputs.dec {
            let (next, cache) = dec.step_cached(x.clone(), d);
            dec_caches.push(cache);
            dec_states.push(next.clone());
            d = next;
        }
    }

    let rep = |slot: usize| -> &Tensor2<T> {
        match arch {
            Architecture::Recursive => &tops[inputs.last_input_step + slot],
            Architecture::DeepMo | Architecture::PolyMo => &final_top,
            Architecture::SeqMo | Architecture::PolySeqMo => &dec_states[slot],
        }
    };

    let inv_b = T::one() / T::lit(b as f64);
    let mut total = T::zero();
    let mut grads = want_grad.then(|| m.net.zeroed());
    let mut d_tops: Vec<Option<Tensor2<T>>> = vec![None; steps];
    let mut d_dec: Vec<Option<Tensor2<T>>> = vec![None; dec_states.len()];
    let accumulate = |slot: &mut Option<Tensor2<T>>, g: Tensor2<T>| match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    };

    for slot in 0..slots {
        let head_idx = m.slot_head(slot);
        let head = &m.net.heads[head_idx];
        let z = rep(slot);
        let logits = head.forward(z);
        let targets: Vec<usize> = batch.iter().map(|s| s.classes[slot]).collect();
        let scale = weights[slot] * inv_b;
        let (loss, dlogits) = softmax_cross_entropy_rows(&logits, &targets, &vec![scale; b]);
        total += loss;
        if let Some(g) = grads.as_mut() {
            if weights[slot] == T::zero() {
                continue;
            }
            let dz = head.backward(z, &dlogits, &mut g.heads[head_idx]);
            match arch {
                Architecture::Recursive => accumulate(&mut d_tops[inputs.last_input_step + slot], dz),
                Architecture::DeepMo | Architecture::PolyMo => accumulate(&mut d_tops[steps - 1], dz),
                Architecture::SeqMo | Architecture::PolySeqMo => accumulate(&mut d_dec[slot], dz),
            }
        }
    }

    let Some(mut g) = grads else {
        return (total, None);
    };

    // decoder backward
    if let Some(dec) = &m.net.decoder {
        let dg = g.decoder.as_mut().expect("decoder gradient");
        let mut carry: Tensor2<T> = Array2::zeros((b, hidden));
        for (i, cache) in dec_caches.iter().enumerate().rev() {
            if let Some(d) = &d_dec[i] {
                carry += d;
            }
            let (_, dh_prev) = dec.backward(cache, &carry, dg);
            carry = dh_prev;
        }
        accumulate(&mut d_tops[steps - 1], carry);
    }

    // encoder backward through time
    let mut carry: Vec<Tensor2<T>> = vec![Array2::zeros((b, hidden)); layers];
    for t in (0..steps).rev() {
        let mut from_above = d_tops[t].take();
        for l in (0..layers).rev() {
            let mut dh = std::mem::replace(&mut carry[l], Array2::zeros((0, 0)));
            if let Some(above) = from_above.take() {
                dh += &above;
            }
            let (dx, dh_prev) = match &inputs.masks[t] {
                Some(mask) => {
                    let live = zero_rows(mask, &dh, false);
                    let (dx, mut dh_prev) = m.net.encoder[l].backward(&caches[t][l], &live, &mut g.encoder[l]);
                    dh_prev += &zero_rows(mask, &dh, true);
                    (zero_rows(mask, &dx, false), dh_prev)
                }
                None => m.net.encoder[l].backward(&caches[t][l], &dh, &mut g.encoder[l]),
            };
            carry[l] = dh_prev;
            if l > 0 {
                from_above = Some(dx);
            }
        }
    }
    (total, Some(g))
}
