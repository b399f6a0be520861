use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use glucast_core::data::{WindowConfig, WindowedSplits};
use glucast_core::models::{load_checkpoint, save_checkpoint, ForecasterModel};
use glucast_core::train::{train_model_with, TrainConfig, TrainReport};
use glucast_core::Scalar;

use super::{data_path, ensure_dir, load, load_splits, seed, train_config, usage, window_config, write_file, Loaded, ScalarKind};
use crate::Common;

pub const CHECKPOINT_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "train_report.json";

/// Trains, stamps the windowing into the model and logs epochs to stderr.
pub fn fit<T: Scalar>(
    cfg: &TrainConfig,
    window: WindowConfig,
    splits: &WindowedSplits,
) -> Result<(ForecasterModel<T>, TrainReport)> {
    let started = Instant::now();
    let (mut m, report) = train_model_with::<T>(cfg, &splits.train, &splits.validation, |e| {
        eprintln!(
            "epoch {:>4}  train {:.5}  val {:.5}  {:.1?}",
            e.epoch,
            e.train_loss,
            e.val_loss,
            started.elapsed()
        );
    })?;
    m.window = window;
    Ok((m, report))
}

/// Saves a checkpoint and proves it loads back to the same model.
pub fn save_verified<T: Scalar>(m: &ForecasterModel<T>, path: &Path) -> Result<()> {
    save_checkpoint(m, path)?;
    let back: ForecasterModel<T> = load_checkpoint(path)?;
    if &back != m {
        bail!("{} did not reload to the trained model", path.display());
    }
    Ok(())
}

fn run<T: Scalar>(cfg: &TrainConfig, window: WindowConfig, splits: &WindowedSplits, out: &Path) -> Result<()> {
    let (m, mut report) = fit::<T>(cfg, window, splits)?;
    save_verified(&m, &out.join(CHECKPOINT_FILE))?;
    report.checkpoint = Some(CHECKPOINT_FILE.to_string());
    write_file(&out.join(REPORT_FILE), report.to_json()? + "\n")?;
    eprintln!("wall clock {:.1?}", report.wall_clock);
    println!(
        "{}: best epoch {} of {}, validation loss {:.5}{}",
        cfg.architecture,
        report.best_epoch,
        report.epochs.len(),
        report.best_val_loss,
        if report.stopped_early { " (early stop)" } else { "" }
    );
    Ok(())
}

pub fn train(common: &Common) -> Result<()> {
    let Loaded { kv, base } = load(common)?;
    let (cfg, window, data, scalar) = (|| -> Result<_> {
        let seed = seed(&kv, common)?;
        let cfg = train_config(&kv, seed)?;
        let window = window_config(&kv)?;
        let data = data_path(&kv, &base)?;
        let scalar: ScalarKind = kv.get_or("scalar", ScalarKind::default())?;
        kv.finish()?;
        Ok((cfg, window, data, scalar))
    })()
    .map_err(usage)?;

    let splits = load_splits(&data, &window)?;
    ensure_dir(&common.out)?;
    match scalar {
        ScalarKind::F32 => run::<f32>(&cfg, window, &splits, &common.out),
        ScalarKind::F64 => run::<f64>(&cfg, window, &splits, &common.out),
    }
}
