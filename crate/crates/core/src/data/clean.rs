use super::GlucoseSeries;

/// Largest plausible change between consecutive 5-minute samples.
pub const MAX_STEP_MGDL: u16 = 40;

/// Splits a series at every transition of more than 40 mg/dL; the offending
/// transition is dropped. Pieces keep the parent's segment number.
pub fn filter_artifacts(series: &GlucoseSeries) -> Vec<GlucoseSeries> {
    let mut out = Vec::new();
    let mut begin = 0;
    for i in 1..=series.values.len() {
        let cut = i == series.values.len()
            || series.values[i].abs_diff(series.values[i - 1]) > MAX_STEP_MGDL;
        if cut {
            out.push(GlucoseSeries {
                patient_id: series.patient_id.clone(),
                session_id: series.session_id.clone(),
                segment: series.segment,
                start: series.timestamp(begin),
                values: series.values[begin..i].to_vec(),
            });
            begin = i;
        }
    }
    out
}

/// [`filter_artifacts`] over a whole collection, renumbering segments
/// consecutively within each session.
pub fn filter_all(series: &[GlucoseSeries]) -> Vec<GlucoseSeries> {
    let mut out: Vec<GlucoseSeries> = Vec::new();
    for s in series {
        for mut piece in filter_artifacts(s) {
            piece.segment = match out.last() {
                Some(prev) if prev.patient_id == piece.patient_id && prev.session_id == piece.session_id => {
                    prev.segment + 1
                }
                _ => 0,
            };
            out.push(piece);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::series::parse_timestamp;

    fn series(values: Vec<u16>) -> GlucoseSeries {
        GlucoseSeries::new("p", "s", parse_timestamp("2017-01-01T00:00:00").unwrap(), values).unwrap()
    }

    #[test]
    fn jump_over_forty_splits() {
        let parts = filter_artifacts(&series(vec![100, 150, 150]));
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].values, vec![100]);
        assert_eq!(parts[1].values, vec![150, 150]);
        assert_eq!(parts[1].start, parse_timestamp("2017-01-01T00:05:00").unwrap());
    }

    #[test]
    fn small_steps_untouched() {
        assert_eq!(filter_artifacts(&series(vec![100, 139, 150])).len(), 1);
        let ramp: Vec<u16> = (0..8).map(|i| 60 + 40 * i).collect();
        let parts = filter_artifacts(&series(ramp.clone()));
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].values, ramp);
    }

    #[test]
    fn renumbers_segments() {
        let all = filter_all(&[series(vec![100, 200, 201, 100, 101])]);
        assert_eq!(all.iter().map(|s| s.segment).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
