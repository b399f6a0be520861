//! Multi-step CGM glucose forecasting with recurrent networks and
//! discretized outputs.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod neural;
pub mod polyfit;
pub mod quantize;
mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = models::ForecasterModel<f64>;
pub type Forecast = models::Forecast<f64>;
pub type Bins = quantize::BinSpec<f64>;
pub type Coeffs = polyfit::PolyCoeffs<f64>;
pub type Forest = baselines::RandomForest<f64>;
pub type Normalizer = models::Normalizer<f64>;
