use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Dataset, RegressionTree, TreeConfig};
use crate::data::Window;
use crate::error::{Error, Result};
use crate::models::Forecaster;
use crate::Scalar;

const FORMAT: &str = "glucast-forest";
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    /// Trailing history samples used as features.
    pub input_len: usize,
    /// One tree payload of `horizon` values instead of a single next value.
    pub multi_output: bool,
    pub horizon: usize,
    pub bootstrap: bool,
    pub tree: TreeConfig,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            input_len: 10,
            multi_output: true,
            horizon: 6,
            bootstrap: true,
            tree: TreeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RandomForest<T> {
    pub config: ForestConfig,
    pub trees: Vec<RegressionTree<T>>,
}

/// Features are the last `input_len` inputs; targets are the next value or
/// the whole horizon.
pub fn forest_dataset<T: Scalar>(windows: &[Window], cfg: &ForestConfig) -> Result<Dataset<T>> {
    if windows.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let outputs = if cfg.multi_output { cfg.horizon } else { 1 };
    let mut x = Vec::with_capacity(windows.len() * cfg.input_len);
    let mut y = Vec::with_capacity(windows.len() * outputs);
    for w in windows {
        if w.input.len() < cfg.input_len || w.target.len() < outputs {
            return Err(Error::InvalidArgument(format!(
                "window with {} inputs and {} targets cannot feed a forest of input {} and {outputs} outputs",
                w.input.len(),
                w.target.len(),
                cfg.input_len
            )));
        }
        x.extend(w.input[w.input.len() - cfg.input_len..].iter().map(|&v| T::lit(v as f64)));
        y.extend(w.target[..outputs].iter().map(|&v| T::lit(v as f64)));
    }
    Dataset::new(x, y, cfg.input_len, outputs)
}

impl<T: Scalar> RandomForest<T> {
    pub fn fit(windows: &[Window], cfg: ForestConfig) -> Result<Self> {
        if cfg.n_estimators == 0 || cfg.input_len == 0 || cfg.horizon == 0 {
            return Err(Error::InvalidArgument(
                "forest needs at least one estimator, input and output".into(),
            ));
        }
        let data = forest_dataset::<T>(windows, &cfg)?;
        Self::fit_dataset(&data, cfg)
    }

    pub fn fit_dataset(data: &Dataset<T>, cfg: ForestConfig) -> Result<Self> {
        let n = data.len();
        let trees = (0..cfg.n_estimators)
            .into_par_iter()
            .map(|k| {
                let rows: Vec<usize> = if cfg.bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(k as u64);
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(data, &rows, cfg.tree)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config: cfg, trees })
    }

    /// Mean payload of all trees for one feature vector.
    pub fn predict_row(&self, x: &[T]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.trees[0].n_outputs];
        for t in &self.trees {
            for (a, &v) in acc.iter_mut().zip(t.predict(x)) {
                *a += v;
            }
        }
        let k = T::lit(self.trees.len() as f64);
        acc.into_iter().map(|a| a / k).collect()
    }

    pub fn predict(&self, history: &[T]) -> Result<Vec<T>> {
        let c = &self.config;
        if history.len() < c.input_len {
            return Err(Error::InvalidArgument(format!(
                "forest needs {} history samples, got {}",
                c.input_len,
                history.len()
            )));
        }
        let mut window: Vec<T> = history[history.len() - c.input_len..].to_vec();
        if c.multi_output {
            return Ok(self.predict_row(&window));
        }
        let mut out = Vec::with_capacity(c.horizon);
        for _ in 0..c.horizon {
            let next = self.predict_row(&window)[0];
            out.push(next);
            window.remove(0);
            window.push(next);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a, T: Scalar> {
            format: &'a str,
            version: u32,
            scalar: &'a str,
            #[serde(flatten)]
            forest: &'a RandomForest<T>,
        }
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(
            &mut w,
            &Out {
                format: FORMAT,
                version: FOREST_VERSION,
                scalar: T::TAG,
                forest: self,
            },
        )?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(bound = "T: Scalar")]
        struct In<T> {
            format: String,
            version: u32,
            scalar: String,
            #[serde(flatten)]
            forest: RandomForest<T>,
        }
        let v: In<T> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if v.format != FORMAT || v.version != FOREST_VERSION || v.scalar != T::TAG {
            return Err(Error::Mismatch(format!(
                "unsupported forest file ({} v{} {})",
                v.format, v.version, v.scalar
            )));
        }
        if v.forest.trees.is_empty() {
            return Err(Error::Malformed("forest without trees".into()));
        }
        Ok(v.forest)
    }
}

/// Fits a forest with unlimited depth, single-sample leaves and bootstrap.
pub fn rf_fit<T: Scalar>(
    windows: &[Window],
    n_estimators: usize,
    input_len: usize,
    multi_output: bool,
    seed: u64,
) -> Result<RandomForest<T>> {
    RandomForest::fit(
        windows,
        ForestConfig {
            n_estimators,
            input_len,
            multi_output,
            seed,
            ..ForestConfig::default()
        },
    )
}

pub fn rf_predict<T: Scalar>(f: &RandomForest<T>, history: &[T]) -> Result<Vec<T>> {
    f.predict(history)
}

impl<T: Scalar> Forecaster<T> for RandomForest<T> {
    fn name(&self) -> String {
        if self.config.multi_output {
            "RF: MO".into()
        } else {
            "RF: Rec".into()
        }
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn forecast_batch(&self, histories: &[&[T]]) -> Result<Vec<Vec<T>>> {
        histories.iter().map(|h| self.predict(h)).collect()
    }
}
