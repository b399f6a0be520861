//! Subcommand implementations. Each command reads every key it understands
//! up front, rejects leftovers, and only then touches data.

mod evaluate;
mod forecast;
mod generate;
mod sweep;
mod train;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use glucast_core::data::{load_csv, prepare, WindowConfig, WindowedSplits};
use glucast_core::train::TrainConfig;

use crate::config::KvConfig;
use crate::Common;

pub use evaluate::evaluate;
pub use forecast::forecast;
pub use generate::generate;
pub use sweep::sweep_bw;
pub use train::train;

/// Bad configuration or arguments; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(e: anyhow::Error) -> anyhow::Error {
    UsageError(format!("{e:#}")).into()
}

/// Sizes the global rayon pool from `GLUCAST_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("GLUCAST_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(usage(anyhow::anyhow!("GLUCAST_THREADS must be a positive integer, got {raw:?}"))),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")
}

/// Parsed config plus the directory relative paths are resolved against.
pub struct Loaded {
    pub kv: KvConfig,
    pub base: PathBuf,
}

pub fn load(common: &Common) -> Result<Loaded> {
    match &common.config {
        None => Ok(Loaded {
            kv: KvConfig::default(),
            base: PathBuf::from("."),
        }),
        Some(path) => {
            let kv = KvConfig::load(path).map_err(usage)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok(Loaded { kv, base })
        }
    }
}

/// The command-line seed wins over the config file; the default is 0.
pub fn seed(kv: &KvConfig, common: &Common) -> Result<u64> {
    let from_file = kv.get::<u64>("seed")?;
    Ok(common.seed.or(from_file).unwrap_or(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalarKind {
    F32,
    #[default]
    F64,
}

impl FromStr for ScalarKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(format!("expected f32 or f64, got {other:?}")),
        }
    }
}

/// `max_history = none` keeps the whole prefix.
#[derive(Debug, Clone, Copy)]
struct MaxHistory(Option<usize>);

impl FromStr for MaxHistory {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "none" {
            Ok(Self(None))
        } else {
            s.parse().map(|n| Self(Some(n)))
        }
    }
}

pub fn window_config(kv: &KvConfig) -> Result<WindowConfig> {
    let d = WindowConfig::default();
    let cfg = WindowConfig {
        min_history: kv.get_or("min_history", d.min_history)?,
        horizon: kv.get_or("horizon", d.horizon)?,
        stride: kv.get_or("stride", d.stride)?,
        max_history: kv.get_or("max_history", MaxHistory(d.max_history))?.0,
    };
    if cfg.min_history == 0 || cfg.horizon == 0 || cfg.stride == 0 {
        bail!("min_history, horizon and stride must be positive");
    }
    if cfg.max_history.is_some_and(|m| m < cfg.min_history) {
        bail!("max_history must be at least min_history");
    }
    Ok(cfg)
}

/// Every training key, with [`TrainConfig::default`] for anything missing.
/// `horizon` is shared with the window config.
pub fn train_config(kv: &KvConfig, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        architecture: kv.get_or("architecture", d.architecture)?,
        layers: kv.get_or("layers", d.layers)?,
        hidden: kv.get_or("hidden", d.hidden)?,
        horizon: kv.get_or("horizon", d.horizon)?,
        degree: kv.get_or("degree", d.degree)?,
        decoder_input: kv.get_or("decoder_input", d.decoder_input)?,
        lr: kv.get_or("lr", d.lr)?,
        weight_decay: kv.get_or("weight_decay", d.weight_decay)?,
        batch_size: kv.get_or("batch_size", d.batch_size)?,
        patience: kv.get_or("patience", d.patience)?,
        max_epochs: kv.get_or("max_epochs", d.max_epochs)?,
        b_w: kv.get_or("b_w", d.b_w)?,
        norm: kv.get_or("norm", d.norm)?,
        bins: kv.get_or("bins", d.bins)?,
        seed,
        val_ape: kv.get_or("val_ape", d.val_ape)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn data_path(kv: &KvConfig, base: &Path) -> Result<PathBuf> {
    kv.path("data", base)?
        .ok_or_else(|| anyhow::anyhow!("missing required key `data`"))
}

/// load → filter → split → window, refusing empty splits.
pub fn load_splits(path: &Path, window: &WindowConfig) -> Result<WindowedSplits> {
    let series = load_csv(path).with_context(|| format!("loading {}", path.display()))?;
    let splits = prepare(&series, window);
    for (name, w) in [("train", &splits.train), ("validation", &splits.validation), ("test", &splits.test)] {
        if w.is_empty() {
            bail!("{}: no {name} windows under the configured windowing", path.display());
        }
    }
    eprintln!(
        "{}: {} series, windows train/val/test {}/{}/{}",
        path.display(),
        series.len(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );
    Ok(splits)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Reads the scalar tag of a checkpoint or forest file without decoding it.
pub fn peek_scalar(path: &Path) -> Result<ScalarKind> {
    #[derive(serde::Deserialize)]
    struct Head {
        scalar: String,
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let head: Head = serde_json::from_str(&text).with_context(|| format!("{}: not a glucast model file", path.display()))?;
    head.scalar.parse().map_err(|e: String| anyhow::anyhow!("{}: {e}", path.display()))
}
