//! Least-squares polynomials over a forecast window, sampled at `t = 0..h-1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// `f(t) = w_0 + w_1 t + ... + w_n t^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PolyCoeffs<T> {
    pub coeffs: Vec<T>,
}

impl<T: Scalar> PolyCoeffs<T> {
    pub fn new(coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Empty("polynomial coefficients"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn at(&self, t: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * t + c)
    }
}

/// Least-squares fit by Householder QR of the Vandermonde design matrix.
pub fn fit_poly<T: Scalar>(values: &[T], degree: usize) -> Result<PolyCoeffs<T>> {
    let h = values.len();
    if degree >= h {
        return Err(Error::IllPosed { degree, len: h });
    }
    let m = degree + 1;
    // column-major design matrix
    let mut a: Vec<Vec<T>> = (0..m)
        .map(|k| (0..h).map(|t| T::lit(t as f64).powi(k as i32)).collect())
        .collect();
    let mut b = values.to_vec();

    for k in 0..m {
        let norm = a[k][k..].iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        for col in a.iter_mut().skip(k) {
            let dot: T = v.iter().zip(&col[k..]).map(|(&x, &y)| x * y).sum();
            let s = two * dot / vnorm2;
            for (c, &x) in col[k..].iter_mut().zip(&v) {
                *c -= s * x;
            }
        }
        let dot: T = v.iter().zip(&b[k..]).map(|(&x, &y)| x * y).sum();
        let s = two * dot / vnorm2;
        for (c, &x) in b[k..].iter_mut().zip(&v) {
            *c -= s * x;
        }
    }

    let mut w = vec![T::zero(); m];
    for k in (0..m).rev() {
        let mut acc = b[k];
        for j in k + 1..m {
            acc -= a[j][k] * w[j];
        }
        w[k] = acc / a[k][k];
    }
    PolyCoeffs::new(w)
}

/// `[f(0), ..., f(h-1)]`.
pub fn eval_poly<T: Scalar>(c: &PolyCoeffs<T>, h: usize) -> Vec<T> {
    (0..h).map(|t| c.at(T::lit(t as f64))).collect()
}

/// Replaces a forecast with its best-fit polynomial of the given degree.
pub fn smooth_predictions<T: Scalar>(preds: &[T], degree: usize) -> Result<Vec<T>> {
    Ok(eval_poly(&fit_poly(preds, degree)?, preds.len()))
}
