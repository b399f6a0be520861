use std::collections::BTreeMap;

use chrono::NaiveDateTime;

use super::GlucoseSeries;

/// Session-level partition: per patient the last session is test, the one
/// before it validation, everything earlier training.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitSet {
    pub train: Vec<GlucoseSeries>,
    pub validation: Vec<GlucoseSeries>,
    pub test: Vec<GlucoseSeries>,
}

/// Patients with one session go to test only; with two, to validation and
/// test. Sessions are ordered by their earliest timestamp.
pub fn split_by_session(all: &[GlucoseSeries]) -> SplitSet {
    // patient -> session -> (first timestamp, segments)
    let mut patients: BTreeMap<&str, BTreeMap<&str, (NaiveDateTime, Vec<&GlucoseSeries>)>> = BTreeMap::new();
    for s in all {
        let entry = patients
            .entry(s.patient_id.as_str())
            .or_default()
            .entry(s.session_id.as_str())
            .or_insert((s.start, Vec::new()));
        entry.0 = entry.0.min(s.start);
        entry.1.push(s);
    }

    let mut out = SplitSet::default();
    for sessions in patients.into_values() {
        let mut ordered: Vec<_> = sessions.into_iter().collect();
        ordered.sort_by(|a, b| (a.1 .0, a.0).cmp(&(b.1 .0, b.0)));
        let n = ordered.len();
        for (i, (_, (_, segments))) in ordered.into_iter().enumerate() {
            let bucket = if i + 1 == n {
                &mut out.test
            } else if i + 2 == n {
                &mut out.validation
            } else {
                &mut out.train
            };
            bucket.extend(segments.into_iter().cloned());
        }
    }
    out
}
