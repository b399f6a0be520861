use super::{Forecast, Forecaster};
use crate::error::{Error, Result};
use crate::Scalar;

/// Elementwise mean of member forecasts. Distributions and coefficients are
/// dropped.
pub fn ensemble_mean<T: Scalar>(forecasts: &[Forecast<T>]) -> Result<Forecast<T>> {
    let rows: Vec<&[T]> = forecasts.iter().map(|f| f.values.as_slice()).collect();
    Ok(Forecast::from_values(mean_rows(&rows)?))
}

fn mean_rows<T: Scalar>(rows: &[&[T]]) -> Result<Vec<T>> {
    let first = rows.first().ok_or(Error::Empty("ensemble"))?;
    let h = first.len();
    // Deviations from the first member are averaged, so identical members
    // reproduce it bit for bit.
    let mut acc = vec![T::zero(); h];
    for r in rows {
        if r.len() != h {
            return Err(Error::Mismatch(format!("ensemble member has horizon {}, expected {h}", r.len())));
        }
        for ((a, &v), &f) in acc.iter_mut().zip(r.iter()).zip(first.iter()) {
            *a += v - f;
        }
    }
    let k = T::lit(rows.len() as f64);
    Ok(acc.into_iter().zip(first.iter()).map(|(a, &f)| f + a / k).collect())
}

/// Averages the forecasts of several members with a common horizon.
pub struct Ensemble<F> {
    pub members: Vec<F>,
    name: String,
}

impl<F> Ensemble<F> {
    pub fn new<T: Scalar>(name: impl Into<String>, members: Vec<F>) -> Result<Self>
    where
        F: Forecaster<T>,
    {
        let first = members.first().ok_or(Error::Empty("ensemble"))?;
        let h = first.horizon();
        if let Some(bad) = members.iter().find(|m| m.horizon() != h) {
            return Err(Error::Mismatch(format!(
                "ensemble member {} has horizon {}, expected {h}",
                bad.name(),
                bad.horizon()
            )));
        }
        Ok(Self {
            members,
            name: name.into(),
        })
    }
}

impl<T: Scalar, F: Forecaster<T>> Forecaster<T> for Ensemble<F> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn horizon(&self) -> usize {
        self.members[0].horizon()
    }

    fn forecast_batch(&self, histories: &[&[T]]) -> Result<Vec<Vec<T>>> {
        let per_member = self
            .members
            .iter()
            .map(|m| m.forecast_batch(histories))
            .collect::<Result<Vec<_>>>()?;
        (0..histories.len())
            .map(|i| {
                let rows: Vec<&[T]> = per_member.iter().map(|p| p[i].as_slice()).collect();
                mean_rows(&rows)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_members_are_unchanged() {
        let f = Forecast::<f64>::from_values(vec![101.0, 102.5, 99.0, 120.0, 80.0, 77.0]);
        let out = ensemble_mean(&vec![f.clone(); 10]).unwrap();
        assert_eq!(out.values, f.values);
    }

    #[test]
    fn two_constant_members() {
        let a = Forecast::from_values(vec![100.0; 6]);
        let b = Forecast::from_values(vec![200.0; 6]);
        assert_eq!(ensemble_mean(&[a, b]).unwrap().values, vec![150.0; 6]);
    }

    #[test]
    fn matches_brute_force_average() {
        let members: Vec<Forecast<f64>> = (0..7)
            .map(|k| Forecast::from_values((0..6).map(|i| 40.0 + (k * 37 + i * 11) as f64 % 300.0).collect()))
            .collect();
        let out = ensemble_mean(&members).unwrap();
        for i in 0..6 {
            let mut s = 0.0;
            for m in &members {
                s += m.values[i];
            }
            assert!((out.values[i] - s / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(ensemble_mean::<f64>(&[]), Err(Error::Empty(_))));
        let a = Forecast::from_values(vec![1.0; 6]);
        let b = Forecast::from_values(vec![1.0; 5]);
        assert!(matches!(ensemble_mean(&[a, b]), Err(Error::Mismatch(_))));
    }
}
