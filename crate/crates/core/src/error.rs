use alloc::string::String;

use crate::ingest::Placement;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("row {row}: adc count {value} outside 0..=1023")]
    AdcRange { row: usize, value: i64 },
    #[error("row {row}: timestamp {timestamp} for device '{device}' does not increase")]
    NonMonotoneTimestamp {
        row: usize,
        device: String,
        timestamp: f64,
    },
    #[error("row {row}: device '{device}' changes placement")]
    PlacementChanged { row: usize, device: String },
    #[error("row {row}: non-finite timestamp")]
    NonFiniteTimestamp { row: usize },
    #[error("device '{device}' has {count} readings, at least 2 are needed")]
    TooFewReadings { device: String, count: usize },
    #[error("placement {0:?} recorded by more than one device")]
    DuplicatePlacement(Placement),
    #[error("no streams to synchronize")]
    NoStreams,
    #[error("streams do not overlap in time (latest start {start}, earliest end {end})")]
    EmptyOverlap { start: f64, end: f64 },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid filter: {0}")]
    Filter(String),
    #[error("invalid window: {0}")]
    Window(String),
    #[error("recording lacks placement {0:?}")]
    MissingPlacement(Placement),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("class {0} has no training windows")]
    MissingClass(usize),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("split {split}: {source}")]
    Split {
        split: alloc::string::String,
        source: alloc::boxed::Box<Error>,
    },
    #[error("invalid split plan: {0}")]
    Plan(String),
    #[error("generator: {0}")]
    Generator(String),
}
