//! Recordings to labelled feature windows, and the transformer learner.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{featurize, FeatureSpec, FeatureWindow, PlacementConfig};
use crate::filter::{lowpass, FilterSpec};
use crate::harness::{Classifier, Learner};
use crate::ingest::{Activity, Placement, SyncedRecording};
use crate::matrix::Matrix;
use crate::model::{train, ModelConfig, TrainConfig, TrainedModel};
use crate::window::{make_windows, LabeledWindow, WindowSpec};
use crate::{Error, Result, DEFAULT_RATE_HZ};

/// Everything between a synchronized recording and a trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub placement: PlacementConfig,
    pub rate_hz: f64,
    pub cutoff_hz: f64,
    pub filter_order: u32,
    pub window_sec: f64,
    pub overlap_pct: f64,
    pub features: FeatureSpec,
    /// `d_in` and `n_classes` are filled in from the data.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Share of each training split held out for early stopping.
    pub val_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            placement: PlacementConfig::WWFF,
            rate_hz: DEFAULT_RATE_HZ,
            cutoff_hz: 5.0,
            filter_order: 2,
            window_sec: 1.6,
            overlap_pct: 87.5,
            features: FeatureSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            val_fraction: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            cutoff_hz: self.cutoff_hz,
            sample_rate_hz: self.rate_hz,
            order: self.filter_order,
        }
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::from_seconds(self.window_sec, self.overlap_pct, self.rate_hz)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim(self.placement.placements().len())
    }

    pub fn model_config(&self, n_classes: usize) -> ModelConfig {
        ModelConfig {
            d_in: self.feature_dim(),
            n_classes,
            ..self.model
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter_spec().validate()?;
        self.window_spec()?;
        self.train.validate()?;
        if self.feature_dim() == 0 {
            return Err(Error::Config(format!(
                "{:?} features are empty for placement {}",
                self.features.mode, self.placement
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        Ok(())
    }
}

/// Feature windows of a set of recordings under one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub windows: Vec<FeatureWindow>,
    /// Index `i` is the activity of label `i`.
    pub classes: Vec<Activity>,
    pub placements: Vec<Placement>,
    pub window: WindowSpec,
}

/// Filters, windows and restricts one recording to the configured placement.
pub fn labeled_windows(recording: &SyncedRecording, cfg: &PipelineConfig) -> Result<Vec<LabeledWindow>> {
    let filtered = lowpass(recording, &cfg.filter_spec())?;
    make_windows(&filtered, &cfg.window_spec()?)?
        .iter()
        .map(|w| cfg.placement.select(w, &recording.channels))
        .collect()
}

/// Activities appearing in any manifest, in canonical order.
pub fn class_list(recordings: &[SyncedRecording]) -> Vec<Activity> {
    let mut classes: Vec<Activity> = recordings
        .iter()
        .flat_map(|r| r.manifest.segments.iter().map(|s| s.activity_label))
        .collect();
    classes.sort();
    classes.dedup();
    classes
}

pub fn build_dataset(recordings: &[SyncedRecording], cfg: &PipelineConfig) -> Result<Dataset> {
    cfg.validate()?;
    if recordings.is_empty() {
        return Err(Error::NoStreams);
    }
    let classes = class_list(recordings);
    let mut windows = Vec::new();
    for rec in recordings {
        for w in labeled_windows(rec, cfg)? {
            windows.push(featurize(&w, &cfg.features, &classes)?);
        }
    }
    Ok(Dataset {
        windows,
        classes,
        placements: cfg.placement.placements().to_vec(),
        window: cfg.window_spec()?,
    })
}

/// Trains the transformer classifier on each split.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLearner {
    pub features: FeatureSpec,
    pub channels: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl TransformerLearner {
    pub fn new(cfg: &PipelineConfig, dataset: &Dataset) -> Self {
        Self {
            features: cfg.features,
            channels: dataset.placements.len(),
            model: cfg.model_config(dataset.classes.len()),
            train: cfg.train,
        }
    }
}

impl Learner for TransformerLearner {
    type Model = TrainedModel;

    fn fit(&self, train_set: &[FeatureWindow], val: &[FeatureWindow], seed: u64) -> Result<TrainedModel> {
        let cfg = TrainConfig { seed, ..self.train };
        train(train_set, val, &self.features, self.channels, &self.model, &cfg)
    }
}

impl Classifier for TrainedModel {
    fn classify(&self, x: &Matrix) -> Result<usize> {
        Ok(self.predict(x)?.0)
    }
}
