use serde::{Deserialize, Serialize};

use super::GlucoseSeries;
use crate::Scalar;

pub const HYPO_THRESHOLD: u16 = 70;
pub const HYPER_THRESHOLD: u16 = 180;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Samples of history required before a window is emitted.
    pub min_history: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Inputs keep at most this many trailing samples; `None` keeps the
    /// whole prefix of the series.
    pub max_history: Option<usize>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            min_history: 10,
            horizon: 6,
            stride: 1,
            max_history: Some(12),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFlags {
    pub is_event: bool,
    pub is_hypo_onset: bool,
    pub is_hyper_onset: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub patient_id: String,
    pub session_id: String,
    pub segment: u32,
    /// Index of the last input sample within its series.
    pub offset: usize,
}

/// One forecasting sample: history, the next `horizon` readings, event tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub input: Vec<u16>,
    pub target: Vec<u16>,
    pub flags: EventFlags,
    pub provenance: Provenance,
}

impl Window {
    pub fn input_values<T: Scalar>(&self) -> Vec<T> {
        self.input.iter().map(|&v| T::lit(v as f64)).collect()
    }

    pub fn target_values<T: Scalar>(&self) -> Vec<T> {
        self.target.iter().map(|&v| T::lit(v as f64)).collect()
    }
}

/// Number of windows [`make_windows`] emits for a series of `len` samples.
pub fn window_count(len: usize, cfg: &WindowConfig) -> usize {
    let need = cfg.min_history + cfg.horizon;
    if len < need || cfg.stride == 0 {
        return 0;
    }
    (len - need) / cfg.stride + 1
}

/// Sliding windows with last-input offsets `min_history-1 ..= len-horizon-1`.
pub fn make_windows(series: &GlucoseSeries, cfg: &WindowConfig) -> Vec<Window> {
    let n = window_count(series.len(), cfg);
    (0..n)
        .map(|i| {
            let t = cfg.min_history - 1 + i * cfg.stride;
            let available = t + 1;
            let keep = cfg.max_history.map_or(available, |m| m.max(cfg.min_history).min(available));
            let input = series.values[available - keep..available].to_vec();
            let target = series.values[available..available + cfg.horizon].to_vec();
            let flags = tag_events(&input, &target);
            Window {
                input,
                target,
                flags,
                provenance: Provenance {
                    patient_id: series.patient_id.clone(),
                    session_id: series.session_id.clone(),
                    segment: series.segment,
                    offset: t,
                },
            }
        })
        .collect()
}

/// Onset tags: the last input is inside the 70–180 band and some target
/// leaves it downward (hypo) or upward (hyper).
pub fn tag_events(input: &[u16], target: &[u16]) -> EventFlags {
    let normal = input
        .last()
        .is_some_and(|&v| (HYPO_THRESHOLD..=HYPER_THRESHOLD).contains(&v));
    let is_hypo_onset = normal && target.iter().any(|&v| v < HYPO_THRESHOLD);
    let is_hyper_onset = normal && target.iter().any(|&v| v > HYPER_THRESHOLD);
    EventFlags {
        is_event: is_hypo_onset || is_hyper_onset,
        is_hypo_onset,
        is_hyper_onset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::series::parse_timestamp;
    use proptest::prelude::*;

    fn series(len: usize) -> GlucoseSeries {
        let values = (0..len).map(|i| 100 + (i % 7) as u16).collect();
        GlucoseSeries::new("p", "s", parse_timestamp("2017-01-01T00:00:00").unwrap(), values).unwrap()
    }

    #[test]
    fn counts_at_boundaries() {
        let cfg = WindowConfig::default();
        assert_eq!(make_windows(&series(16), &cfg).len(), 1);
        assert_eq!(make_windows(&series(15), &cfg).len(), 0);
        let w = make_windows(&series(20), &cfg);
        assert_eq!(w.len(), 5);
        let offsets: Vec<usize> = w.iter().map(|w| w.provenance.offset).collect();
        assert_eq!(offsets, vec![9, 10, 11, 12, 13]);
    }

    #[test]
    fn history_is_truncated_and_contiguous() {
        let s = series(40);
        let cfg = WindowConfig::default();
        for w in make_windows(&s, &cfg) {
            let t = w.provenance.offset;
            assert_eq!(w.input.len(), (t + 1).min(12));
            assert_eq!(*w.input.last().unwrap(), s.values[t]);
            assert_eq!(w.target, s.values[t + 1..t + 7]);
            assert!(w.input.len() >= 10);
        }
        let full = WindowConfig { max_history: None, ..cfg };
        assert_eq!(make_windows(&s, &full).last().unwrap().input.len(), 34);
    }

    #[test]
    fn event_examples() {
        let f = tag_events(&[100], &[95, 80, 65, 70, 72, 75]);
        assert!(f.is_hypo_onset && f.is_event && !f.is_hyper_onset);
        assert_eq!(tag_events(&[200], &[210, 250, 240, 230, 220, 210]), EventFlags::default());
        assert_eq!(tag_events(&[100], &[70, 90, 180, 150, 120, 110]), EventFlags::default());
    }

    proptest! {
        #[test]
        fn count_formula(len in 1usize..=100) {
            let cfg = WindowConfig::default();
            let expected = if len >= 16 { len - 16 + 1 } else { 0 };
            prop_assert_eq!(make_windows(&series(len), &cfg).len(), expected);
        }

        #[test]
        fn flags_only_see_last_input_and_targets(
            prefix in prop::collection::vec(40u16..=400, 0..12),
            other in prop::collection::vec(40u16..=400, 0..12),
            last in 40u16..=400,
            target in prop::collection::vec(40u16..=400, 6),
        ) {
            let mut a = prefix.clone();
            a.push(last);
            let mut b = other.clone();
            b.push(last);
            prop_assert_eq!(tag_events(&a, &target), tag_events(&b, &target));
        }
    }
}
