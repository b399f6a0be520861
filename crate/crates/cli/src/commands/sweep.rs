use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use glucast_core::data::{WindowConfig, WindowedSplits};
use glucast_core::eval::{evaluate as score, EvalConfig};
use glucast_core::train::TrainConfig;
use glucast_core::Scalar;
use serde::Serialize;

use super::train::fit;
use super::{data_path, ensure_dir, load, load_splits, seed, train_config, usage, window_config, write_file, Loaded, ScalarKind};
use crate::Common;

pub const CSV_FILE: &str = "sweep_bw.csv";
pub const JSON_FILE: &str = "sweep_bw.json";

#[derive(Debug, Serialize)]
struct Row {
    b_w: f64,
    /// Mean APE of the last forecast step on the test split.
    final_step_mean_ape: f64,
    full_median_ape: f64,
    best_epoch: usize,
    epochs: usize,
    loss_weights: Vec<f64>,
}

fn run<T: Scalar>(base: &TrainConfig, values: &[f64], window: WindowConfig, splits: &WindowedSplits) -> Result<Vec<Row>> {
    let mut rows = Vec::with_capacity(values.len());
    for &b_w in values {
        let cfg = TrainConfig { b_w, ..*base };
        eprintln!("b_w = {b_w}");
        let (m, report) = fit::<T>(&cfg, window, splits)?;
        let eval = score(&m, &splits.test, &EvalConfig::default())?;
        rows.push(Row {
            b_w,
            final_step_mean_ape: *eval.per_step.last().expect("horizon is positive"),
            full_median_ape: eval.full.median,
            best_epoch: report.best_epoch,
            epochs: report.epochs.len(),
            loss_weights: report.loss_weights,
        });
    }
    Ok(rows)
}

fn to_csv(rows: &[Row]) -> String {
    let mut s = String::from("b_w,final_step_mean_ape,full_median_ape,best_epoch,epochs,loss_weights\n");
    for r in rows {
        let w: Vec<String> = r.loss_weights.iter().map(f64::to_string).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.b_w,
            r.final_step_mean_ape,
            r.full_median_ape,
            r.best_epoch,
            r.epochs,
            w.join(";")
        );
    }
    s
}

pub fn sweep_bw(common: &Common) -> Result<()> {
    let Loaded { kv, base } = load(common)?;
    let (cfg, values, window, data, scalar) = (|| -> Result<_> {
        let seed = seed(&kv, common)?;
        let cfg = train_config(&kv, seed)?;
        let values: Vec<f64> = kv.list("b_w_values")?.unwrap_or_default();
        if values.is_empty() {
            bail!("`b_w_values` must list at least one value");
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            bail!("b_w value {v} outside [0, 1]");
        }
        let window = window_config(&kv)?;
        let data = data_path(&kv, &base)?;
        let scalar: ScalarKind = kv.get_or("scalar", ScalarKind::default())?;
        kv.finish()?;
        Ok((cfg, values, window, data, scalar))
    })()
    .map_err(usage)?;

    let splits = load_splits(&data, &window)?;
    let rows = match scalar {
        ScalarKind::F32 => run::<f32>(&cfg, &values, window, &splits)?,
        ScalarKind::F64 => run::<f64>(&cfg, &values, window, &splits)?,
    };
    let out: &Path = &common.out;
    ensure_dir(out)?;
    let csv = to_csv(&rows);
    write_file(&out.join(CSV_FILE), &csv)?;
    write_file(&out.join(JSON_FILE), serde_json::to_string_pretty(&rows)? + "\n")?;
    print!("{csv}");
    Ok(())
}
