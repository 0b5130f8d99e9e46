//! Overlapping fixed-length windows.
//!
//! Window `i` of a run of `T` scans covers rows `[i·(L−O), i·(L−O)+L)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ingest::{Activity, Environment, SyncedRecording};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub overlap: usize,
}

impl WindowSpec {
    pub fn new(length: usize, overlap: usize) -> Result<Self> {
        let spec = Self { length, overlap };
        spec.validate()?;
        Ok(spec)
    }

    /// From a duration and an overlap percentage at a given scan rate.
    pub fn from_seconds(window_sec: f64, overlap_pct: f64, rate_hz: f64) -> Result<Self> {
        if !(window_sec.is_finite() && window_sec > 0.0) {
            return Err(Error::Window(format!("window length {window_sec} s must be positive")));
        }
        if !(0.0..100.0).contains(&overlap_pct) {
            return Err(Error::Window(format!("overlap {overlap_pct}% outside [0, 100)")));
        }
        let length = seconds_to_samples(window_sec, rate_hz);
        Self::new(length, overlap_to_samples(overlap_pct, length))
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Window("length must be positive".into()));
        }
        if self.overlap >= self.length {
            return Err(Error::Window(format!(
                "overlap {} must be below length {}",
                self.overlap, self.length
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.length - self.overlap
    }

    /// Row range of window `i`.
    pub fn bounds(&self, i: usize) -> core::ops::Range<usize> {
        let start = i * self.stride();
        start..start + self.length
    }

    /// Number of whole windows in a run of `total` scans.
    pub fn count(&self, total: usize) -> usize {
        if total < self.length {
            0
        } else {
            (total - self.length) / self.stride() + 1
        }
    }
}

/// `round(L · pct / 100)`, half away from zero, clamped to `L − 1`.
pub fn overlap_to_samples(overlap_pct: f64, length: usize) -> usize {
    let o = libm::round(length as f64 * overlap_pct / 100.0);
    let o = if o > 0.0 { o as usize } else { 0 };
    o.min(length.saturating_sub(1))
}

/// `round(sec · rate)`, at least 2.
pub fn seconds_to_samples(window_sec: f64, rate_hz: f64) -> usize {
    let l = libm::round(window_sec * rate_hz);
    if l > 2.0 {
        l as usize
    } else {
        2
    }
}

/// A single-activity window of filtered scans.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    /// `L × m` volts.
    pub values: Matrix,
    pub label: Activity,
    pub subject_id: String,
    pub environment: Environment,
    /// Index of the manifest segment the window was cut from.
    pub segment: usize,
}

/// Cuts every manifest segment of `recording` into windows. Windows never
/// cross a segment boundary; segments shorter than the window yield none.
pub fn make_windows(recording: &SyncedRecording, spec: &WindowSpec) -> Result<Vec<LabeledWindow>> {
    spec.validate()?;
    let manifest = &recording.manifest;
    let mut out = Vec::new();
    for (seg_idx, segment) in manifest.segments.iter().enumerate() {
        let range = recording.segment_range(segment);
        let total = range.len();
        for i in 0..spec.count(total) {
            let b = spec.bounds(i);
            out.push(LabeledWindow {
                values: recording.values.slice_rows(range.start + b.start, range.start + b.end),
                label: segment.activity_label,
                subject_id: manifest.subject_id.clone(),
                environment: manifest.environment,
                segment: seg_idx,
            });
        }
    }
    Ok(out)
}
