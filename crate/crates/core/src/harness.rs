//! Evaluation protocols: k-fold, leave-one-subject-out and cross-environment
//! splits, confusion matrices, and one-parameter sweeps.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureWindow, PlacementConfig};
use crate::ingest::{Activity, Environment, SyncedRecording};
use crate::matrix::Matrix;
use crate::pipeline::{build_dataset, Dataset, PipelineConfig};
use crate::{rng_from_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    #[serde(rename = "kfold")]
    KFold { k: usize },
    #[serde(rename = "louo")]
    LeaveOneUserOut,
    CrossEnvironment { train: Environment, test: Environment },
}

impl Protocol {
    pub fn name(&self) -> String {
        match self {
            Protocol::KFold { k } => format!("kfold{k}"),
            Protocol::LeaveOneUserOut => "louo".into(),
            Protocol::CrossEnvironment { train, test } => format!("{train}->{test}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(protocol: Protocol, seed: u64) -> Self {
        Self { protocol, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self.protocol {
            Protocol::KFold { k } if k < 2 => Err(Error::Plan(format!("k = {k}, need at least 2 folds"))),
            Protocol::CrossEnvironment { train, test } if train == test => {
                Err(Error::Plan(format!("train and test environments are both {train}")))
            }
            _ => Ok(()),
        }
    }
}

/// Window indices of one train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `windows` according to `plan`.
pub fn split(windows: &[FeatureWindow], plan: &SplitPlan) -> Result<Vec<Split>> {
    plan.validate()?;
    let n = windows.len();
    if n == 0 {
        return Err(Error::Plan("no windows to split".into()));
    }
    match plan.protocol {
        Protocol::KFold { k } => {
            if n < k {
                return Err(Error::Plan(format!("{n} windows cannot fill {k} folds")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from_seed(plan.seed));
            let mut start = 0;
            let mut out = Vec::with_capacity(k);
            for f in 0..k {
                let size = n / k + usize::from(f < n % k);
                let mut test = order[start..start + size].to_vec();
                let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
                test.sort_unstable();
                train.sort_unstable();
                out.push(Split {
                    name: format!("fold{}", f + 1),
                    train,
                    test,
                });
                start += size;
            }
            Ok(out)
        }
        Protocol::LeaveOneUserOut => {
            let mut subjects: Vec<&str> = Vec::new();
            for w in windows {
                if !subjects.contains(&w.subject_id.as_str()) {
                    subjects.push(&w.subject_id);
                }
            }
            if subjects.len() < 2 {
                return Err(Error::Plan("leave-one-user-out needs at least 2 subjects".into()));
            }
            Ok(subjects
                .iter()
                .map(|&s| {
                    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| windows[i].subject_id == s);
                    Split {
                        name: s.to_string(),
                        train,
                        test,
                    }
                })
                .collect())
        }
        Protocol::CrossEnvironment { train, test } => {
            let pick = |env| (0..n).filter(|&i| windows[i].environment == env).collect::<Vec<_>>();
            let (tr, te) = (pick(train), pick(test));
            if tr.is_empty() || te.is_empty() {
                return Err(Error::Plan(format!(
                    "{} {train} and {} {test} windows; both must be non-empty",
                    tr.len(),
                    te.len()
                )));
            }
            Ok(alloc::vec![Split {
                name: plan.protocol.name(),
                train: tr,
                test: te,
            }])
        }
    }
}

/// Fits a classifier to training windows.
pub trait Learner {
    type Model: Classifier;

    fn fit(&self, train: &[FeatureWindow], val: &[FeatureWindow], seed: u64) -> Result<Self::Model>;
}

pub trait Classifier {
    fn classify(&self, x: &Matrix) -> Result<usize>;
}

/// Counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: alloc::vec![alloc::vec![0; n_classes]; n_classes],
        }
    }

    pub fn add(&mut self, truth: usize, prediction: usize) -> Result<()> {
        for label in [truth, prediction] {
            if label >= self.n_classes {
                return Err(Error::LabelRange {
                    label,
                    n_classes: self.n_classes,
                });
            }
        }
        self.counts[truth][prediction] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.counts[i][i]).sum()
    }

    /// trace / total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub name: String,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub plan: SplitPlan,
    pub classes: Vec<Activity>,
    pub splits: Vec<SplitReport>,
    /// Unweighted mean over splits.
    pub mean_accuracy: f64,
    pub config: PipelineConfig,
}

impl EvalReport {
    /// Sums the per-split matrices.
    pub fn pooled_confusion(&self) -> ConfusionMatrix {
        let mut total = ConfusionMatrix::new(self.classes.len());
        for s in &self.splits {
            for (row, src) in total.counts.iter_mut().zip(&s.confusion.counts) {
                for (a, b) in row.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        total
    }
}

/// Seed of split `index`; serial and parallel runs agree.
pub fn split_seed(plan: &SplitPlan, index: usize) -> u64 {
    plan.seed.wrapping_add(index as u64)
}

/// Moves a seeded `val_fraction` share of the training indices into a
/// validation set. Returns `(train, val)`.
pub fn carve_validation(train: &[usize], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_val = libm::round(train.len() as f64 * val_fraction) as usize;
    if n_val == 0 || n_val >= train.len() {
        return (train.to_vec(), Vec::new());
    }
    let mut order = train.to_vec();
    order.shuffle(&mut rng_from_seed(seed ^ 0x7661_6c69_6461_7465));
    let mut val = order.split_off(order.len() - n_val);
    order.sort_unstable();
    val.sort_unstable();
    (order, val)
}

fn gather(windows: &[FeatureWindow], ids: &[usize]) -> Vec<FeatureWindow> {
    ids.iter().map(|&i| windows[i].clone()).collect()
}

/// Trains on one split and returns the fitted model with its validation size.
pub fn fit_split<L: Learner>(
    dataset: &Dataset,
    split: &Split,
    seed: u64,
    val_fraction: f64,
    learner: &L,
) -> Result<(L::Model, usize)> {
    let (train_ids, val_ids) = carve_validation(&split.train, val_fraction, seed);
    let model = learner.fit(&gather(&dataset.windows, &train_ids), &gather(&dataset.windows, &val_ids), seed)?;
    Ok((model, val_ids.len()))
}

/// Trains and scores split `index` of `splits`.
pub fn run_split<L: Learner>(
    dataset: &Dataset,
    split: &Split,
    index: usize,
    plan: &SplitPlan,
    val_fraction: f64,
    learner: &L,
) -> Result<SplitReport> {
    let annotate = |e: Error| Error::Split {
        split: split.name.clone(),
        source: Box::new(e),
    };
    let seed = split_seed(plan, index);
    let (model, val_windows) = fit_split(dataset, split, seed, val_fraction, learner).map_err(annotate)?;
    let mut confusion = ConfusionMatrix::new(dataset.classes.len());
    for &i in &split.test {
        let w = &dataset.windows[i];
        let pred = model.classify(&w.values).map_err(annotate)?;
        confusion.add(w.label, pred).map_err(annotate)?;
    }
    Ok(SplitReport {
        name: split.name.clone(),
        train_windows: split.train.len() - val_windows,
        val_windows,
        test_windows: split.test.len(),
        accuracy: confusion.accuracy(),
        confusion,
    })
}

/// Collects split reports in split order.
pub fn assemble_report(dataset: &Dataset, cfg: &PipelineConfig, plan: &SplitPlan, splits: Vec<SplitReport>) -> EvalReport {
    let mean_accuracy = if splits.is_empty() {
        0.0
    } else {
        splits.iter().map(|s| s.accuracy).sum::<f64>() / splits.len() as f64
    };
    EvalReport {
        protocol: plan.protocol.name(),
        plan: *plan,
        classes: dataset.classes.clone(),
        splits,
        mean_accuracy,
        config: cfg.clone(),
    }
}

/// Runs every split of `plan` in turn.
pub fn run_protocol<L: Learner>(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    plan: &SplitPlan,
    learner: &L,
) -> Result<EvalReport> {
    let splits = split(&dataset.windows, plan)?;
    let reports = splits
        .iter()
        .enumerate()
        .map(|(i, s)| run_split(dataset, s, i, plan, cfg.val_fraction, learner))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_report(dataset, cfg, plan, reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Overlap percentages.
    Overlap(Vec<f64>),
    Placement(Vec<PlacementConfig>),
    /// Window lengths in seconds.
    WindowSize(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Overlap(_) => "overlap_pct",
            SweepAxis::Placement(_) => "placement",
            SweepAxis::WindowSize(_) => "window_sec",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Overlap(v) | SweepAxis::WindowSize(v) => v.len(),
            SweepAxis::Placement(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `base` with the `i`-th value applied, and that value as text.
    pub fn apply(&self, base: &PipelineConfig, i: usize) -> (PipelineConfig, String) {
        let mut cfg = base.clone();
        let label = match self {
            SweepAxis::Overlap(v) => {
                cfg.overlap_pct = v[i];
                format!("{}", v[i])
            }
            SweepAxis::Placement(v) => {
                cfg.placement = v[i];
                v[i].tag().to_string()
            }
            SweepAxis::WindowSize(v) => {
                cfg.window_sec = v[i];
                format!("{}", v[i])
            }
        };
        (cfg, label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub mean_accuracy: f64,
    pub window_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    pub reports: Vec<EvalReport>,
}

/// One protocol run per axis value, changing only that value. `run` does
/// the evaluation so callers can choose the learner and the scheduling.
pub fn sweep<F>(recordings: &[SyncedRecording], base: &PipelineConfig, axis: &SweepAxis, mut run: F) -> Result<SweepTable>
where
    F: FnMut(&Dataset, &PipelineConfig) -> Result<EvalReport>,
{
    if axis.is_empty() {
        return Err(Error::Config(format!("{} sweep has no values", axis.name())));
    }
    let configs = (0..axis.len()).map(|i| axis.apply(base, i)).collect::<Vec<_>>();
    for (cfg, label) in &configs {
        cfg.validate()
            .map_err(|e| Error::Config(format!("{} = {label}: {e}", axis.name())))?;
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (cfg, value) in configs {
        let dataset = build_dataset(recordings, &cfg)?;
        let report = run(&dataset, &cfg)?;
        rows.push(SweepRow {
            value,
            mean_accuracy: report.mean_accuracy,
            window_count: dataset.windows.len(),
        });
        reports.push(report);
    }
    Ok(SweepTable {
        axis: axis.name().to_string(),
        rows,
        reports,
    })
}
