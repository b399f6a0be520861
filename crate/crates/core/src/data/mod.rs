//! CGM ingestion, cleaning, session splits, windowing and synthetic data.

mod clean;
mod series;
mod split;
mod synth;
mod window;

pub use clean::{filter_all, filter_artifacts, MAX_STEP_MGDL};
pub use series::{load_csv, write_csv, GlucoseSeries, CSV_HEADER, SAMPLE_MINUTES};
pub use split::{split_by_session, SplitSet};
pub use synth::{synth_generate, SynthConfig};
pub use window::{
    make_windows, tag_events, window_count, EventFlags, Provenance, Window, WindowConfig,
    HYPER_THRESHOLD, HYPO_THRESHOLD,
};

/// Windows for each split, ordered by (patient, session, segment, offset).
#[derive(Debug, Clone, Default)]
pub struct WindowedSplits {
    pub train: Vec<Window>,
    pub validation: Vec<Window>,
    pub test: Vec<Window>,
}

pub fn windows_of(series: &[GlucoseSeries], cfg: &WindowConfig) -> Vec<Window> {
    series.iter().flat_map(|s| make_windows(s, cfg)).collect()
}

/// filter → split → window.
pub fn prepare(series: &[GlucoseSeries], cfg: &WindowConfig) -> WindowedSplits {
    let cleaned = filter_all(series);
    let split = split_by_session(&cleaned);
    WindowedSplits {
        train: windows_of(&split.train, cfg),
        validation: windows_of(&split.validation, cfg),
        test: windows_of(&split.test, cfg),
    }
}
