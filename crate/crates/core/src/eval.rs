//! Window APE, percentile summaries and per-subset reports.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Window;
use crate::error::{dim, Error, Result};
use crate::models::Forecaster;
use crate::polyfit::smooth_predictions;
use crate::Scalar;

/// Mean absolute percentage error over a window, in percent.
pub fn ape_window<T: Scalar>(pred: &[T], actual: &[T]) -> Result<T> {
    if pred.len() != actual.len() {
        return Err(dim("ape_window", actual.len(), pred.len()));
    }
    if actual.is_empty() {
        return Err(Error::Empty("ape window"));
    }
    let sum: T = pred.iter().zip(actual).map(|(&p, &a)| ((p - a) / a).abs()).sum();
    Ok(T::lit(100.0) * sum / T::lit(actual.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub mean: f64,
    pub count: usize,
}

/// Percentile `q ∈ [0, 1]` of sorted data, interpolating linearly between
/// order statistics at position `q (n - 1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(apes: &[f64]) -> Result<Summary> {
    if apes.is_empty() {
        return Err(Error::Empty("APE list"));
    }
    if apes.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite APE".into()));
    }
    let mut s = apes.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Summary {
        median: percentile(&s, 0.5),
        p2_5: percentile(&s, 0.025),
        p97_5: percentile(&s, 0.975),
        mean: s.iter().sum::<f64>() / s.len() as f64,
        count: s.len(),
    })
}

/// Mean absolute percentage error at each step, over all samples.
pub fn per_step_errors<P: AsRef<[f64]>, A: AsRef<[f64]>>(preds: &[P], actuals: &[A]) -> Result<Vec<f64>> {
    if preds.len() != actuals.len() {
        return Err(dim("per_step_errors", actuals.len(), preds.len()));
    }
    let Some(first) = actuals.first() else {
        return Ok(Vec::new());
    };
    let h = first.as_ref().len();
    let mut acc = vec![0.0; h];
    for (p, a) in preds.iter().zip(actuals) {
        let (p, a) = (p.as_ref(), a.as_ref());
        if p.len() != h || a.len() != h {
            return Err(dim("per_step_errors", h, p.len().min(a.len())));
        }
        for i in 0..h {
            acc[i] += 100.0 * ((p[i] - a[i]) / a[i]).abs();
        }
    }
    let n = preds.len() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Fit this degree to every forecast before scoring.
    pub smoothing_degree: Option<usize>,
    /// Worker cap; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Free-form description of the run folded into the config hash.
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub config_hash: String,
    pub smoothing_degree: Option<usize>,
    pub full: Summary,
    pub event: Option<Summary>,
    pub hypo: Option<Summary>,
    pub hyper: Option<Summary>,
    pub per_step: Vec<f64>,
}

/// Short hex digest of any serializable configuration.
pub fn config_hash<S: Serialize>(value: &S) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Forecasts every window, optionally smoothed, in input order.
pub fn forecast_windows<T: Scalar, F: Forecaster<T> + ?Sized>(
    model: &F,
    windows: &[Window],
    smoothing_degree: Option<usize>,
    threads: Option<usize>,
) -> Result<Vec<Vec<T>>> {
    let run = || -> Result<Vec<Vec<T>>> {
        let chunks: Vec<Result<Vec<Vec<T>>>> = windows
            .par_chunks(256)
            .map(|c| {
                let hist: Vec<Vec<T>> = c.iter().map(|w| w.input_values()).collect();
                let refs: Vec<&[T]> = hist.iter().map(|h| h.as_slice()).collect();
                let preds = model.forecast_batch(&refs)?;
                match smoothing_degree {
                    Some(n) => preds.iter().map(|p| smooth_predictions(p, n)).collect(),
                    None => Ok(preds),
                }
            })
            .collect();
        let mut out = Vec::with_capacity(windows.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Scores precomputed forecasts against the windows they came from.
pub fn report_from_predictions(
    model: &str,
    windows: &[Window],
    preds: &[Vec<f64>],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Empty("test windows"));
    }
    if preds.len() != windows.len() {
        return Err(dim("evaluate", windows.len(), preds.len()));
    }
    let actuals: Vec<Vec<f64>> = windows.iter().map(|w| w.target_values()).collect();
    let apes = preds
        .iter()
        .zip(&actuals)
        .map(|(p, a)| ape_window(p, a))
        .collect::<Result<Vec<f64>>>()?;
    let subset = |keep: &dyn Fn(&Window) -> bool| -> Option<Summary> {
        let sel: Vec<f64> = windows.iter().zip(&apes).filter(|(w, _)| keep(w)).map(|(_, &a)| a).collect();
        summarize(&sel).ok()
    };
    let hash = config_hash(&(model, cfg, windows.len()))?;
    Ok(EvalReport {
        model: model.to_string(),
        config_hash: hash,
        smoothing_degree: cfg.smoothing_degree,
        full: summarize(&apes)?,
        event: subset(&|w| w.flags.is_event),
        hypo: subset(&|w| w.flags.is_hypo_onset),
        hyper: subset(&|w| w.flags.is_hyper_onset),
        per_step: per_step_errors(preds, &actuals)?,
    })
}

pub fn evaluate<T: Scalar, F: Forecaster<T> + ?Sized>(
    model: &F,
    windows: &[Window],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Empty("test windows"));
    }
    if let Some(w) = windows.iter().find(|w| w.target.len() != model.horizon()) {
        return Err(dim("evaluate horizon", model.horizon(), w.target.len()));
    }
    let preds = forecast_windows(model, windows, cfg.smoothing_degree, cfg.threads)?;
    let preds: Vec<Vec<f64>> = preds.into_iter().map(|p| p.into_iter().map(|v| v.as_f64()).collect()).collect();
    report_from_predictions(&model.name(), windows, &preds, cfg)
}

const TABLE_ORDER: [&str; 9] = [
    "Extrapolation",
    "RF: Rec",
    "RF: MO",
    "Recursive",
    "DeepMO",
    "SeqMO",
    "PolyMO",
    "PolySeqMO",
    "PolySeqMO Ensemble",
];

/// Sorts reports into the conventional results-table order; unknown names
/// keep their relative order at the end.
pub fn sort_reports(reports: &mut [EvalReport]) {
    let rank = |name: &str| TABLE_ORDER.iter().position(|&n| n == name).unwrap_or(TABLE_ORDER.len());
    reports.sort_by_key(|r| rank(&r.model));
}

/// One row per model: median and percentile band for the Full, Event, Hypo
/// and Hyper subsets, then counts and the full-set mean.
pub fn write_table_csv<W: Write>(out: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["model".to_string()];
    for s in ["full", "event", "hypo", "hyper"] {
        for f in ["median", "p2_5", "p97_5", "mean", "count"] {
            header.push(format!("{s}_{f}"));
        }
    }
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.model.clone()];
        for s in [Some(r.full), r.event, r.hypo, r.hyper] {
            match s {
                Some(s) => row.extend([
                    fmt(s.median),
                    fmt(s.p2_5),
                    fmt(s.p97_5),
                    fmt(s.mean),
                    s.count.to_string(),
                ]),
                None => row.extend(["".into(), "".into(), "".into(), "".into(), "0".into()]),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready per-step curves: `step_index, model, mean_ape`.
pub fn write_per_step_csv<W: Write>(out: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step_index", "model", "mean_ape"])?;
    for r in reports {
        for (i, v) in r.per_step.iter().enumerate() {
            w.write_record([(i + 1).to_string(), r.model.clone(), fmt(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{tag_events, Provenance};

    #[test]
    fn ape_examples() {
        assert_eq!(ape_window(&[100.0; 6], &[100.0; 6]).unwrap(), 0.0);
        assert!((ape_window::<f64>(&[110.0; 6], &[100.0; 6]).unwrap() - 10.0).abs() < 1e-12);
        assert!(ape_window(&[1.0; 5], &[1.0; 6]).is_err());
        let p: [f64; 6] = [93.0, 140.5, 220.0, 61.0, 75.0, 399.0];
        let a: [f64; 6] = [90.0, 150.0, 200.0, 70.0, 77.0, 380.0];
        let mut brute = 0.0;
        for i in 0..6 {
            brute += (p[i] - a[i]).abs() / a[i];
        }
        assert!((ape_window(&p, &a).unwrap() - 100.0 * brute / 6.0).abs() < 1e-12);
    }

    #[test]
    fn summary_examples() {
        let one = summarize(&[5.0]).unwrap();
        assert_eq!((one.median, one.p2_5, one.p97_5, one.mean), (5.0, 5.0, 5.0, 5.0));
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(&xs).unwrap();
        assert!((s.median - 50.5).abs() < 1e-12);
        assert!((s.p2_5 - 3.475).abs() < 1e-12);
        assert!((s.p97_5 - 97.525).abs() < 1e-12);
        let doubled: Vec<f64> = xs.iter().chain(&xs).copied().collect();
        assert_eq!(summarize(&doubled).unwrap().median, s.median);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn per_step_examples() {
        let a = vec![vec![100.0; 6], vec![50.0; 6]];
        assert_eq!(per_step_errors(&a, &a).unwrap(), vec![0.0; 6]);
        let p: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v * 1.1).collect()).collect();
        for v in per_step_errors(&p, &a).unwrap() {
            assert!((v - 10.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn per_step_mean_equals_window_mean(
            rows in prop::collection::vec((prop::collection::vec(40.0f64..400.0, 6), prop::collection::vec(40.0f64..400.0, 6)), 1..30)
        ) {
            let preds: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let acts: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
            let steps = per_step_errors(&preds, &acts).unwrap();
            let step_mean = steps.iter().sum::<f64>() / 6.0;
            let win_mean = preds.iter().zip(&acts).map(|(p, a)| ape_window(p, a).unwrap()).sum::<f64>() / rows.len() as f64;
            prop_assert!((step_mean - win_mean).abs() < 1e-9);
        }

        #[test]
        fn ape_is_scale_invariant(p in prop::collection::vec(40.0f64..400.0, 6), a in prop::collection::vec(40.0f64..400.0, 6), k in 0.01f64..100.0) {
            let base = ape_window(&p, &a).unwrap();
            prop_assert!(base >= 0.0);
            let ps: Vec<f64> = p.iter().map(|v| v * k).collect();
            let as_: Vec<f64> = a.iter().map(|v| v * k).collect();
            prop_assert!((ape_window(&ps, &as_).unwrap() - base).abs() < 1e-9 * (1.0 + base));
        }

        #[test]
        fn percentiles_are_ordered(xs in prop::collection::vec(0.0f64..100.0, 1..200)) {
            let s = summarize(&xs).unwrap();
            prop_assert!(s.p2_5 <= s.median && s.median <= s.p97_5);
        }
    }

    fn window(input: Vec<u16>, target: Vec<u16>) -> Window {
        let flags = tag_events(&input, &target);
        Window {
            input,
            target,
            flags,
            provenance: Provenance {
                patient_id: "P".into(),
                session_id: "S".into(),
                segment: 0,
                offset: 0,
            },
        }
    }

    fn mixed() -> Vec<Window> {
        vec![
            window(vec![100; 10], vec![100, 95, 85, 75, 68, 60]),
            window(vec![170; 10], vec![175, 180, 185, 190, 195, 200]),
            window(vec![120; 10], vec![121, 122, 123, 124, 125, 126]),
            window(vec![65; 10], vec![60, 55, 50, 45, 40, 40]),
            window(vec![175; 10], vec![60, 70, 120, 190, 200, 68]),
        ]
    }

    #[test]
    fn oracle_scores_zero_everywhere() {
        let ws = mixed();
        let preds: Vec<Vec<f64>> = ws.iter().map(|w| w.target_values()).collect();
        let r = report_from_predictions("oracle", &ws, &preds, &EvalConfig::default()).unwrap();
        assert_eq!(r.full.median, 0.0);
        for s in [r.event, r.hypo, r.hyper] {
            assert_eq!(s.unwrap().median, 0.0);
        }
    }

    #[test]
    fn subset_counts_match_retagging() {
        let ws = mixed();
        let preds: Vec<Vec<f64>> = ws.iter().map(|w| w.input_values::<f64>()[..6].to_vec()).collect();
        let r = report_from_predictions("m", &ws, &preds, &EvalConfig::default()).unwrap();
        let normal = |w: &Window| (70..=180).contains(w.input.last().unwrap());
        let hypo = ws.iter().filter(|w| normal(w) && w.target.iter().any(|&v| v < 70)).count();
        let hyper = ws.iter().filter(|w| normal(w) && w.target.iter().any(|&v| v > 180)).count();
        let both = ws
            .iter()
            .filter(|w| normal(w) && w.target.iter().any(|&v| v < 70) && w.target.iter().any(|&v| v > 180))
            .count();
        assert_eq!(r.hypo.unwrap().count, hypo);
        assert_eq!(r.hyper.unwrap().count, hyper);
        assert_eq!(r.event.unwrap().count, hypo + hyper - both);
        assert_eq!(r.full.count, ws.len());
    }

    #[test]
    fn all_event_set_matches_full() {
        let ws: Vec<Window> = mixed().into_iter().filter(|w| w.flags.is_event).collect();
        let preds: Vec<Vec<f64>> = ws.iter().map(|w| w.target_values::<f64>().iter().map(|v| v + 3.0).collect()).collect();
        let r = report_from_predictions("m", &ws, &preds, &EvalConfig::default()).unwrap();
        assert_eq!(r.full, r.event.unwrap());
    }

    #[test]
    fn table_order_and_csv() {
        let ws = mixed();
        let preds: Vec<Vec<f64>> = ws.iter().map(|w| w.target_values()).collect();
        let mut reports: Vec<EvalReport> = ["PolySeqMO", "Extrapolation", "DeepMO", "RF: MO"]
            .iter()
            .map(|n| report_from_predictions(n, &ws, &preds, &EvalConfig::default()).unwrap())
            .collect();
        sort_reports(&mut reports);
        let names: Vec<&str> = reports.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(names, ["Extrapolation", "RF: MO", "DeepMO", "PolySeqMO"]);
        let mut buf = Vec::new();
        write_per_step_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 6);
        assert!(text.starts_with("step_index,model,mean_ape\n1,Extrapolation,"));
    }

    #[test]
    fn empty_test_set_errors() {
        assert!(matches!(
            report_from_predictions("m", &[], &[], &EvalConfig::default()),
            Err(Error::Empty(_))
        ));
    }
}
