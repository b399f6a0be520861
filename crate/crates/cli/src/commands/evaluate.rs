use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use glucast_core::baselines::{ForestConfig, LinearExtrapolation, RandomForest};
use glucast_core::data::{Window, WindowConfig};
use glucast_core::error::Error;
use glucast_core::eval::{evaluate as score, sort_reports, write_per_step_csv, write_table_csv, EvalConfig, EvalReport};
use glucast_core::models::{load_checkpoint, Ensemble, Forecaster, ForecasterModel};
use glucast_core::quantize::BinSpec;
use glucast_core::Scalar;

use super::{data_path, ensure_dir, load, load_splits, peek_scalar, seed, usage, window_config, write_file, Loaded, ScalarKind};
use crate::Common;

pub const REPORT_FILE: &str = "eval_report.json";
pub const TABLE_FILE: &str = "eval_table.csv";
pub const PER_STEP_FILE: &str = "per_step.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Baseline {
    Extrapolation,
    RfRec,
    RfMo,
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "extrapolation" => Ok(Self::Extrapolation),
            "rf-rec" => Ok(Self::RfRec),
            "rf-mo" => Ok(Self::RfMo),
            other => Err(format!("unknown baseline {other:?} (extrapolation, rf-rec, rf-mo)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Smoothing(Option<usize>);

impl FromStr for Smoothing {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "none" {
            Ok(Self(None))
        } else {
            s.parse().map(|d| Self(Some(d)))
        }
    }
}

struct Settings {
    data: PathBuf,
    window: WindowConfig,
    bins: usize,
    checkpoints: Vec<PathBuf>,
    ensemble: Vec<PathBuf>,
    ensemble_name: Option<String>,
    baselines: Vec<Baseline>,
    rf_estimators: usize,
    rf_input_len: usize,
    seed: u64,
    scalar: Option<ScalarKind>,
    eval: EvalConfig,
}

fn settings(loaded: &Loaded, common: &Common) -> Result<Settings> {
    let kv = &loaded.kv;
    let paths = |key: &str| -> Result<Vec<PathBuf>> {
        Ok(kv
            .list::<PathBuf>(key)?
            .unwrap_or_default()
            .into_iter()
            .map(|p| if p.is_absolute() { p } else { loaded.base.join(p) })
            .collect())
    };
    let s = Settings {
        data: data_path(kv, &loaded.base)?,
        window: window_config(kv)?,
        bins: kv.get_or("bins", glucast_core::quantize::DEFAULT_BINS)?,
        checkpoints: paths("checkpoints")?,
        ensemble: paths("ensemble")?,
        ensemble_name: kv.get("ensemble_name")?,
        baselines: kv.list("baselines")?.unwrap_or_default(),
        rf_estimators: kv.get_or("rf_estimators", ForestConfig::default().n_estimators)?,
        rf_input_len: kv.get_or("rf_input_len", ForestConfig::default().input_len)?,
        seed: seed(kv, common)?,
        scalar: kv.get("scalar")?,
        eval: EvalConfig {
            smoothing_degree: kv.get_or("smoothing_degree", Smoothing(None))?.0,
            threads: None,
            tag: kv.get_or("tag", String::new())?,
        },
    };
    kv.finish()?;
    if s.checkpoints.is_empty() && s.ensemble.is_empty() && s.baselines.is_empty() {
        bail!("nothing to evaluate: set `checkpoints`, `ensemble` or `baselines`");
    }
    if s.rf_estimators == 0 || s.rf_input_len == 0 {
        bail!("rf_estimators and rf_input_len must be positive");
    }
    Ok(s)
}

/// The scalar every model file agrees on, else the configured one.
fn pick_scalar(s: &Settings) -> Result<ScalarKind> {
    let mut found = s.scalar;
    for p in s.checkpoints.iter().chain(&s.ensemble) {
        let k = peek_scalar(p)?;
        match found {
            Some(f) if f != k => {
                return Err(Error::Mismatch(format!("{} uses a different scalar type than the rest of the run", p.display())).into())
            }
            _ => found = Some(k),
        }
    }
    Ok(found.unwrap_or_default())
}

fn load_member<T: Scalar>(path: &Path, s: &Settings) -> Result<ForecasterModel<T>> {
    let m: ForecasterModel<T> = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    let expected = BinSpec::new(T::lit(40.0), T::lit(400.0), s.bins)?;
    if !m.value_spec.approx_eq(&expected, 1e-6) {
        return Err(Error::Mismatch(format!(
            "{}: value bins {:?} differ from the configured {} over [40, 400]",
            path.display(),
            m.value_spec,
            s.bins
        ))
        .into());
    }
    if m.window != s.window {
        return Err(Error::Mismatch(format!(
            "{}: trained with windowing {:?}, data configured as {:?}",
            path.display(),
            m.window,
            s.window
        ))
        .into());
    }
    Ok(m)
}

fn forest<T: Scalar>(train: &[Window], s: &Settings, multi_output: bool) -> Result<RandomForest<T>> {
    let cfg = ForestConfig {
        n_estimators: s.rf_estimators,
        input_len: s.rf_input_len,
        multi_output,
        horizon: s.window.horizon,
        seed: s.seed,
        ..ForestConfig::default()
    };
    Ok(RandomForest::fit(train, cfg)?)
}

fn run<T: Scalar>(s: &Settings, out: &Path) -> Result<Vec<EvalReport>> {
    let splits = load_splits(&s.data, &s.window)?;
    let mut models: Vec<Box<dyn Forecaster<T>>> = Vec::new();
    for b in &s.baselines {
        models.push(match b {
            Baseline::Extrapolation => Box::new(LinearExtrapolation { horizon: s.window.horizon }),
            Baseline::RfRec => Box::new(forest::<T>(&splits.train, s, false)?),
            Baseline::RfMo => Box::new(forest::<T>(&splits.train, s, true)?),
        });
    }
    for p in &s.checkpoints {
        models.push(Box::new(load_member::<T>(p, s)?));
    }
    if !s.ensemble.is_empty() {
        let members = s.ensemble.iter().map(|p| load_member::<T>(p, s)).collect::<Result<Vec<_>>>()?;
        let name = s
            .ensemble_name
            .clone()
            .unwrap_or_else(|| format!("{} Ensemble", members[0].config.architecture.display_name()));
        models.push(Box::new(Ensemble::new::<T>(name, members)?));
    }

    let mut reports = Vec::with_capacity(models.len());
    for m in &models {
        eprintln!("evaluating {} on {} test windows", m.name(), splits.test.len());
        reports.push(score(m.as_ref(), &splits.test, &s.eval)?);
    }
    sort_reports(&mut reports);

    let mut table = Vec::new();
    write_table_csv(&mut table, &reports)?;
    let mut per_step = Vec::new();
    write_per_step_csv(&mut per_step, &reports)?;
    ensure_dir(out)?;
    write_file(&out.join(REPORT_FILE), serde_json::to_string_pretty(&reports)? + "\n")?;
    write_file(&out.join(TABLE_FILE), table)?;
    write_file(&out.join(PER_STEP_FILE), per_step)?;
    Ok(reports)
}

fn cell(s: &Option<glucast_core::eval::Summary>) -> String {
    s.as_ref().map_or_else(|| "-".to_string(), |s| format!("{:.3}", s.median))
}

pub fn evaluate(common: &Common) -> Result<()> {
    let loaded = load(common)?;
    let s = settings(&loaded, common).map_err(usage)?;
    let reports = match pick_scalar(&s)? {
        ScalarKind::F32 => run::<f32>(&s, &common.out)?,
        ScalarKind::F64 => run::<f64>(&s, &common.out)?,
    };
    let mut text = format!("{:<20} {:>8} {:>8} {:>8} {:>8}\n", "median APE", "full", "event", "hypo", "hyper");
    for r in &reports {
        let _ = writeln!(
            text,
            "{:<20} {:>8.3} {:>8} {:>8} {:>8}",
            r.model,
            r.full.median,
            cell(&r.event),
            cell(&r.hypo),
            cell(&r.hyper)
        );
    }
    print!("{text}");
    Ok(())
}
