//! Relative features: cross-channel differences and temporal differences.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{Activity, Environment, Placement};
use crate::window::LabeledWindow;
use crate::{Error, Matrix, Result};

/// Which cells feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlacementConfig {
    F,
    FF,
    W,
    WW,
    /// Wrist and foot on the same side.
    WF,
    /// Wrist and foot on opposite sides.
    #[serde(rename = "WF_cross")]
    WfCross,
    WWFF,
}

impl PlacementConfig {
    pub const ALL: [PlacementConfig; 7] = [
        PlacementConfig::F,
        PlacementConfig::FF,
        PlacementConfig::W,
        PlacementConfig::WW,
        PlacementConfig::WF,
        PlacementConfig::WfCross,
        PlacementConfig::WWFF,
    ];

    /// Channels in recording order.
    pub fn placements(self) -> &'static [Placement] {
        use Placement::*;
        match self {
            PlacementConfig::F => &[LeftFoot],
            PlacementConfig::FF => &[LeftFoot, RightFoot],
            PlacementConfig::W => &[LeftWrist],
            PlacementConfig::WW => &[LeftWrist, RightWrist],
            PlacementConfig::WF => &[LeftWrist, LeftFoot],
            PlacementConfig::WfCross => &[LeftWrist, RightFoot],
            PlacementConfig::WWFF => &Placement::ALL,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            PlacementConfig::F => "F",
            PlacementConfig::FF => "FF",
            PlacementConfig::W => "W",
            PlacementConfig::WW => "WW",
            PlacementConfig::WF => "WF",
            PlacementConfig::WfCross => "WF_cross",
            PlacementConfig::WWFF => "WWFF",
        }
    }

    /// Restricts a window recorded with `channels` to this configuration.
    pub fn select(self, window: &LabeledWindow, channels: &[Placement]) -> Result<LabeledWindow> {
        let cols = self
            .placements()
            .iter()
            .map(|p| {
                channels
                    .iter()
                    .position(|c| c == p)
                    .ok_or(Error::MissingPlacement(*p))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledWindow {
            values: window.values.select_columns(&cols),
            ..window.clone()
        })
    }
}

impl fmt::Display for PlacementConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PlacementConfig {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        PlacementConfig::ALL
            .into_iter()
            .find(|p| p.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown placement config '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMode {
    PairwiseOnly,
    TemporalOnly,
    /// Pairwise differences followed by per-channel temporal differences.
    Both,
    RawPassthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
    pub normalize: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Both,
            normalize: true,
        }
    }
}

fn pairs(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

impl FeatureSpec {
    /// Feature width for `m` channels.
    pub fn dim(&self, m: usize) -> usize {
        match self.mode {
            FeatureMode::PairwiseOnly => pairs(m),
            FeatureMode::TemporalOnly | FeatureMode::RawPassthrough => m,
            FeatureMode::Both => pairs(m) + m,
        }
    }

    /// Feature columns that depend on channel `c`.
    pub fn channel_features(&self, m: usize, c: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let pairwise = matches!(self.mode, FeatureMode::PairwiseOnly | FeatureMode::Both);
        if pairwise {
            let mut idx = 0;
            for a in 0..m {
                for b in a + 1..m {
                    if a == c || b == c {
                        out.push(idx);
                    }
                    idx += 1;
                }
            }
        }
        match self.mode {
            FeatureMode::Both => out.push(pairs(m) + c),
            FeatureMode::TemporalOnly | FeatureMode::RawPassthrough => out.push(c),
            FeatureMode::PairwiseOnly => {}
        }
        out
    }
}

/// `V_a − V_b` for every pair `a < b`, in lexicographic pair order.
pub fn pairwise_diff(scan: &[f64]) -> Result<Vec<f64>> {
    let m = scan.len();
    if m < 2 {
        return Err(Error::Dimension(format!("pairwise differences need 2 channels, got {m}")));
    }
    let mut out = Vec::with_capacity(pairs(m));
    for a in 0..m {
        for b in a + 1..m {
            out.push(scan[a] - scan[b]);
        }
    }
    Ok(out)
}

/// Row 0 is zero; row `t` is `x[t] − x[t−1]`.
pub fn temporal_diff(window: &Matrix) -> Matrix {
    let (l, m) = (window.rows(), window.cols());
    let mut out = Matrix::zeros(l, m);
    for t in 1..l {
        let (prev, cur) = (window.row(t - 1), window.row(t));
        for (o, (c, p)) in out.row_mut(t).iter_mut().zip(cur.iter().zip(prev)) {
            *o = c - p;
        }
    }
    out
}

/// Model input: `L × d` features and a class index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub values: Matrix,
    pub label: usize,
    pub subject_id: String,
    pub environment: Environment,
}

/// Feature matrix of one window of (already selected) channels.
pub fn feature_matrix(values: &Matrix, spec: &FeatureSpec) -> Result<Matrix> {
    let (l, m) = (values.rows(), values.cols());
    let d = spec.dim(m);
    if d == 0 {
        return Err(Error::Dimension(format!("{:?} yields no features for {m} channel(s)", spec.mode)));
    }
    let mut out = Matrix::zeros(l, d);
    match spec.mode {
        FeatureMode::RawPassthrough => return Ok(values.clone()),
        FeatureMode::TemporalOnly => return Ok(temporal_diff(values)),
        FeatureMode::PairwiseOnly | FeatureMode::Both => {}
    }
    let p = pairs(m);
    for t in 0..l {
        let row = out.row_mut(t);
        if p > 0 {
            row[..p].copy_from_slice(&pairwise_diff(values.row(t))?);
        }
    }
    if spec.mode == FeatureMode::Both {
        let td = temporal_diff(values);
        for t in 0..l {
            out.row_mut(t)[p..].copy_from_slice(td.row(t));
        }
    }
    Ok(out)
}

/// Featurizes a window; `classes` maps activities to label indices.
pub fn featurize(window: &LabeledWindow, spec: &FeatureSpec, classes: &[Activity]) -> Result<FeatureWindow> {
    let label = classes
        .iter()
        .position(|&a| a == window.label)
        .ok_or_else(|| Error::Dimension(format!("activity {} not among the classes", window.label)))?;
    let values = feature_matrix(&window.values, spec)?;
    if !values.is_finite() {
        return Err(Error::NonFinite("feature window".into()));
    }
    Ok(FeatureWindow {
        values,
        label,
        subject_id: window.subject_id.clone(),
        environment: window.environment,
    })
}

/// Per-feature z-score statistics fitted on training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Normalizer {
    /// Leaves features untouched.
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn fit(windows: &[FeatureWindow]) -> Result<Self> {
        let first = windows.first().ok_or(Error::EmptyTrainingSet)?;
        let d = first.values.cols();
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        for w in windows {
            if w.values.cols() != d {
                return Err(Error::Dimension(format!("feature width {} vs {d}", w.values.cols())));
            }
            for row in w.values.iter_rows() {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
            count += w.values.rows();
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut var = vec![0.0; d];
        for w in windows {
            for row in w.values.iter_rows() {
                for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| libm::sqrt(v / n).max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_matrix(&self, values: &Matrix) -> Result<Matrix> {
        if values.cols() != self.dim() {
            return Err(Error::Dimension(format!(
                "normalizer expects {} features, window has {}",
                self.dim(),
                values.cols()
            )));
        }
        let mut out = values.clone();
        for r in 0..out.rows() {
            for ((v, mu), sd) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }

    pub fn apply(&self, window: &FeatureWindow) -> Result<FeatureWindow> {
        Ok(FeatureWindow {
            values: self.apply_matrix(&window.values)?,
            ..window.clone()
        })
    }
}
