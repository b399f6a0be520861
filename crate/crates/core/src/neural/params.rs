use rand::Rng;

use super::Tensor2;
use crate::Scalar;

/// A bundle of trainable tensors visited in a fixed order.
///
/// The same type doubles as its own gradient container, so gradients and
/// optimizer moments line up with parameters positionally.
pub trait Parameters<T: Scalar>: Clone {
    fn tensors(&self) -> Vec<&Tensor2<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor2<T>>;

    fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(T::zero());
        }
        out
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<T> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    /// Adds `scale * other` elementwise.
    fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| super::all_finite(t))
    }
}

/// Fills a tensor with `U(-bound, bound)` draws.
pub fn init_uniform<T: Scalar, R: Rng + ?Sized>(t: &mut Tensor2<T>, bound: f64, rng: &mut R) {
    for v in t.iter_mut() {
        *v = T::lit(rng.gen_range(-bound..=bound));
    }
}

/// Central-difference derivative of `loss` with respect to the flat
/// parameters at `indices` (positions in [`Parameters::flatten`] order).
pub fn finite_difference<T: Scalar, P: Parameters<T>>(
    params: &P,
    indices: &[usize],
    eps: T,
    mut loss: impl FnMut(&P) -> T,
) -> Vec<T> {
    let mut work = params.clone();
    let two = T::lit(2.0);
    indices
        .iter()
        .map(|&i| {
            let orig = *flat_mut(&mut work, i);
            *flat_mut(&mut work, i) = orig + eps;
            let up = loss(&work);
            *flat_mut(&mut work, i) = orig - eps;
            let down = loss(&work);
            *flat_mut(&mut work, i) = orig;
            (up - down) / (two * eps)
        })
        .collect()
}

fn flat_mut<T: Scalar, P: Parameters<T>>(p: &mut P, mut i: usize) -> &mut T {
    for t in p.tensors_mut() {
        if i < t.len() {
            return t.iter_mut().nth(i).expect("index within tensor");
        }
        i -= t.len();
    }
    panic!("flat parameter index out of range");
}
