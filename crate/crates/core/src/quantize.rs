//! Equal-width discretization of real values into categorical classes.
//!
//! Bin `k` is centered on `min + k * width` with `width = (max - min) / (n - 1)`,
//! so the glucose spec `[40, 400]` with 361 bins has unit width and every
//! integer reading is a bin center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyfit::fit_poly;
use crate::Scalar;

pub const GLUCOSE_MIN: f64 = 40.0;
pub const GLUCOSE_MAX: f64 = 400.0;
pub const DEFAULT_BINS: usize = 361;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BinSpec<T> {
    pub min_value: T,
    pub max_value: T,
    pub n_bins: usize,
}

impl<T: Scalar> BinSpec<T> {
    pub fn new(min_value: T, max_value: T, n_bins: usize) -> Result<Self> {
        if !(min_value < max_value) || !min_value.is_finite() || !max_value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bin range [{min_value}, {max_value}] is empty"
            )));
        }
        if n_bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
        }
        Ok(Self {
            min_value,
            max_value,
            n_bins,
        })
    }

    /// The 40–400 mg/dL, 361-bin spec.
    pub fn glucose() -> Self {
        Self::new(T::lit(GLUCOSE_MIN), T::lit(GLUCOSE_MAX), DEFAULT_BINS).expect("valid spec")
    }

    pub fn width(&self) -> T {
        (self.max_value - self.min_value) / T::lit((self.n_bins - 1) as f64)
    }

    /// Index of the nearest bin center, clamping out-of-range values.
    pub fn value_to_bin(&self, v: T) -> usize {
        if v.is_nan() || v <= self.min_value {
            return 0;
        }
        if v >= self.max_value {
            return self.n_bins - 1;
        }
        let pos = ((v - self.min_value) / self.width() + T::lit(0.5)).floor();
        pos.to_usize().unwrap_or(0).min(self.n_bins - 1)
    }

    pub fn bin_to_value(&self, k: usize) -> Result<T> {
        if k >= self.n_bins {
            return Err(Error::OutOfRange {
                index: k,
                len: self.n_bins,
            });
        }
        Ok(self.center(k))
    }

    #[inline]
    pub(crate) fn center(&self, k: usize) -> T {
        if k + 1 == self.n_bins {
            self.max_value
        } else {
            self.min_value + T::lit(k as f64) * self.width()
        }
    }

    pub fn clamp(&self, v: T) -> T {
        v.max(self.min_value).min(self.max_value)
    }

    /// Maps `v` from the spec range onto `[0, 1]`.
    pub fn unit(&self, v: T) -> T {
        (v - self.min_value) / (self.max_value - self.min_value)
    }

    /// Same numerical range and resolution, within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.n_bins == other.n_bins
            && (self.min_value - other.min_value).abs().as_f64() <= tol
            && (self.max_value - other.max_value).abs().as_f64() <= tol
    }
}

/// Probability vector over the bins of some [`BinSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CategoricalDist<T> {
    probs: Vec<T>,
}

impl<T: Scalar> CategoricalDist<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("categorical distribution"));
        }
        if probs.iter().any(|p| !(*p >= T::zero())) {
            return Err(Error::InvalidArgument("negative or NaN probability".into()));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs().as_f64() > 1e-9_f64.max(T::epsilon().as_f64() * 64.0 * probs.len() as f64) {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Lowest index among the maximal entries.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn value_to_bin<T: Scalar>(v: T, spec: &BinSpec<T>) -> usize {
    spec.value_to_bin(v)
}

pub fn bin_to_value<T: Scalar>(k: usize, spec: &BinSpec<T>) -> Result<T> {
    spec.bin_to_value(k)
}

pub fn dist_argmax_value<T: Scalar>(d: &CategoricalDist<T>, spec: &BinSpec<T>) -> Result<T> {
    if d.probs.len() != spec.n_bins {
        return Err(crate::error::dim("distribution", spec.n_bins, d.probs.len()));
    }
    spec.bin_to_value(d.argmax())
}

fn widen_degenerate<T: Scalar>(lo: T, hi: T) -> (T, T) {
    if hi > lo {
        return (lo, hi);
    }
    let pad = T::lit(1e-6).max(T::lit(1e-3) * lo.abs());
    (lo - pad, hi + pad)
}

/// Per-coefficient bin specs from the best-fit polynomials of the training
/// targets: observed min/max per coefficient, with the bias held inside the
/// glucose range.
pub fn coeff_bin_specs<T: Scalar, W: AsRef<[T]>>(
    training_targets: &[W],
    degree: usize,
) -> Result<Vec<BinSpec<T>>> {
    if training_targets.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    if training_targets.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 training windows".into()));
    }
    let mut lo = vec![T::infinity(); degree + 1];
    let mut hi = vec![T::neg_infinity(); degree + 1];
    for target in training_targets {
        let fit = fit_poly(target.as_ref(), degree)?;
        for (j, &w) in fit.coeffs.iter().enumerate() {
            lo[j] = lo[j].min(w);
            hi[j] = hi[j].max(w);
        }
    }
    let (gmin, gmax) = (T::lit(GLUCOSE_MIN), T::lit(GLUCOSE_MAX));
    lo[0] = lo[0].max(gmin).min(gmax);
    hi[0] = hi[0].min(gmax).max(gmin);
    lo.into_iter()
        .zip(hi)
        .map(|(l, h)| {
            let (l, h) = widen_degenerate(l, h);
            BinSpec::new(l, h, DEFAULT_BINS)
        })
        .collect()
}
