use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};

use crate::error::{Error, Result};
use crate::quantize::{GLUCOSE_MAX, GLUCOSE_MIN};

/// Minutes between consecutive CGM samples.
pub const SAMPLE_MINUTES: i64 = 5;

pub const CSV_HEADER: [&str; 4] = ["patient_id", "session_id", "timestamp_iso8601", "glucose_mgdl"];

/// One contiguous, uniformly sampled stretch of a recording session.
///
/// A session split by a time gap or an artifact becomes several series that
/// share `patient_id`/`session_id` and differ in `segment`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlucoseSeries {
    pub patient_id: String,
    pub session_id: String,
    pub segment: u32,
    pub start: NaiveDateTime,
    pub values: Vec<u16>,
}

impl GlucoseSeries {
    pub fn new(
        patient_id: impl Into<String>,
        session_id: impl Into<String>,
        start: NaiveDateTime,
        values: Vec<u16>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("glucose series"));
        }
        if let Some(v) = values.iter().find(|&&v| !in_sensor_range(v)) {
            return Err(Error::InvalidArgument(format!("glucose {v} outside sensor range")));
        }
        Ok(Self {
            patient_id: patient_id.into(),
            session_id: session_id.into(),
            segment: 0,
            start,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::minutes(SAMPLE_MINUTES * index as i64)
    }
}

pub(crate) fn in_sensor_range(v: u16) -> bool {
    (GLUCOSE_MIN as u16..=GLUCOSE_MAX as u16).contains(&v)
}

pub(crate) fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

pub(crate) fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Reads the four-column CGM schema.
///
/// Rows are grouped by `(patient, session)` and sorted by time; any gap over
/// five minutes starts a new segment. Duplicate or off-grid timestamps are
/// rejected with the offending line number.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<GlucoseSeries>> {
    let path = path.as_ref();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(parse_err(1, format!("expected header {}", CSV_HEADER.join(","))));
    }

    let mut groups: BTreeMap<(String, String), Vec<(NaiveDateTime, u16, u64)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, got {}", record.len())));
        }
        let ts = parse_timestamp(&record[2])
            .ok_or_else(|| parse_err(line, format!("bad timestamp {:?}", &record[2])))?;
        let value: u16 = record[3]
            .parse()
            .map_err(|_| parse_err(line, format!("bad glucose value {:?}", &record[3])))?;
        if !in_sensor_range(value) {
            return Err(parse_err(line, format!("glucose {value} outside sensor range 40-400")));
        }
        groups
            .entry((record[0].to_string(), record[1].to_string()))
            .or_default()
            .push((ts, value, line));
    }

    let step = Duration::minutes(SAMPLE_MINUTES);
    let mut sessions: Vec<Vec<GlucoseSeries>> = Vec::new();
    for ((patient, session), mut rows) in groups {
        rows.sort_by_key(|r| r.0);
        let mut segments: Vec<GlucoseSeries> = Vec::new();
        let mut prev: Option<NaiveDateTime> = None;
        for (ts, value, line) in rows {
            match prev {
                Some(p) if ts - p > step => {
                    let seg = segments.len() as u32;
                    let mut s = GlucoseSeries::new(patient.clone(), session.clone(), ts, vec![value])?;
                    s.segment = seg;
                    segments.push(s);
                }
                Some(p) if ts - p == step => segments.last_mut().expect("open segment").values.push(value),
                Some(p) if ts == p => return Err(parse_err(line, format!("duplicate timestamp {ts}"))),
                Some(_) => {
                    return Err(parse_err(line, format!("timestamp {ts} is off the 5-minute grid")))
                }
                None => segments.push(GlucoseSeries::new(patient.clone(), session.clone(), ts, vec![value])?),
            }
            prev = Some(ts);
        }
        sessions.push(segments);
    }
    sessions.sort_by(|a, b| (&a[0].patient_id, a[0].start).cmp(&(&b[0].patient_id, b[0].start)));
    Ok(sessions.into_iter().flatten().collect())
}

/// Writes series in the same schema [`load_csv`] reads.
pub fn write_csv<W: Write>(out: W, series: &[GlucoseSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            w.write_record([
                s.patient_id.as_str(),
                s.session_id.as_str(),
                &format_timestamp(&s.timestamp(i)),
                &v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
