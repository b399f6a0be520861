use crate::error::{Error, Result};
use crate::models::Forecaster;
use crate::polyfit::fit_poly;
use crate::quantize::BinSpec;
use crate::Scalar;

/// Samples used for the line fit (30 minutes at 5-minute sampling).
pub const LINEAR_LOOKBACK: usize = 6;

/// Least-squares line through the last six readings, continued for the next
/// `horizon` steps and clamped to 40–400 mg/dL.
pub fn linear_extrapolate<T: Scalar>(history: &[T], horizon: usize) -> Result<Vec<T>> {
    if history.len() < LINEAR_LOOKBACK {
        return Err(Error::InvalidArgument(format!(
            "linear extrapolation needs {LINEAR_LOOKBACK} samples, got {}",
            history.len()
        )));
    }
    let tail = &history[history.len() - LINEAR_LOOKBACK..];
    let line = fit_poly(tail, 1)?;
    let spec = BinSpec::<T>::glucose();
    Ok((0..horizon)
        .map(|i| spec.clamp(line.at(T::lit((LINEAR_LOOKBACK + i) as f64))))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearExtrapolation {
    pub horizon: usize,
}

impl Default for LinearExtrapolation {
    fn default() -> Self {
        Self { horizon: 6 }
    }
}

impl<T: Scalar> Forecaster<T> for LinearExtrapolation {
    fn name(&self) -> String {
        "Extrapolation".into()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast_batch(&self, histories: &[&[T]]) -> Result<Vec<Vec<T>>> {
        histories.iter().map(|h| linear_extrapolate(h, self.horizon)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn flat_tail_stays_flat() {
        close(&linear_extrapolate(&[100.0; 6], 6).unwrap(), &[100.0; 6]);
    }

    #[test]
    fn exact_line_continues() {
        let h = [100.0, 102.0, 104.0, 106.0, 108.0, 110.0];
        close(&linear_extrapolate(&h, 6).unwrap(), &[112.0, 114.0, 116.0, 118.0, 120.0, 122.0]);
    }

    #[test]
    fn only_the_tail_matters_and_floor_clamps() {
        let h = [300.0, 10.0, 200.0, 190.0, 180.0, 170.0, 160.0, 150.0];
        close(&linear_extrapolate(&h, 6).unwrap(), &[140.0, 130.0, 120.0, 110.0, 100.0, 90.0]);
        let steep = [200.0, 170.0, 140.0, 110.0, 80.0, 50.0];
        let out = linear_extrapolate(&steep, 6).unwrap();
        close(&out, &[40.0; 6]);
    }

    #[test]
    fn short_history_errors() {
        assert!(linear_extrapolate(&[100.0; 5], 6).is_err());
    }
}
