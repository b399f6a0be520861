//! Shallow comparators: linear extrapolation and random forests.
//!
//! Forests work on raw readings; nothing here is normalized or discretized.

mod forest;
mod linear;
mod tree;

pub use forest::{forest_dataset, rf_fit, rf_predict, ForestConfig, RandomForest, FOREST_VERSION};
pub use linear::{linear_extrapolate, LinearExtrapolation, LINEAR_LOOKBACK};
pub use tree::{variance_reduction, Dataset, Node, RegressionTree, TreeConfig};
