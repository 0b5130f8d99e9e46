use std::cell::RefCell;
use std::collections::BTreeSet;

use proptest::prelude::*;
use solstep_core::features::{FeatureWindow, PlacementConfig};
use solstep_core::harness::{
    carve_validation, fit_split, run_protocol, split, sweep, Classifier, ConfusionMatrix, Learner, Protocol,
    SplitPlan, SweepAxis,
};
use solstep_core::ingest::{Activity, Environment, Placement, SyncedRecording};
use solstep_core::matrix::Matrix;
use solstep_core::model::ModelConfig;
use solstep_core::pipeline::{build_dataset, Dataset, PipelineConfig, TransformerLearner};
use solstep_core::synthgen::{generate_dataset, DatasetSpec};
use solstep_core::window::WindowSpec;
use solstep_core::{Error, DEFAULT_RATE_HZ};

/// Windows whose first feature is the label, so an oracle can read it back.
fn toy_windows(subjects: usize, per_class: usize, classes: usize, env: Environment) -> Vec<FeatureWindow> {
    let mut out = Vec::new();
    for s in 0..subjects {
        for c in 0..classes {
            for j in 0..per_class {
                out.push(FeatureWindow {
                    values: Matrix::from_vec(2, 2, vec![c as f64, j as f64, s as f64, 0.0]),
                    label: c,
                    subject_id: format!("S{}", s + 1),
                    environment: env,
                });
            }
        }
    }
    out
}

fn toy_dataset(windows: Vec<FeatureWindow>, classes: usize) -> Dataset {
    Dataset {
        windows,
        classes: Activity::first(classes).to_vec(),
        placements: vec![Placement::LeftWrist, Placement::LeftFoot],
        window: WindowSpec::new(2, 0).unwrap(),
    }
}

struct Oracle;
struct ReadLabel;

impl Classifier for ReadLabel {
    fn classify(&self, x: &Matrix) -> solstep_core::Result<usize> {
        Ok(x.get(0, 0) as usize)
    }
}

impl Learner for Oracle {
    type Model = ReadLabel;
    fn fit(&self, _: &[FeatureWindow], _: &[FeatureWindow], _: u64) -> solstep_core::Result<ReadLabel> {
        Ok(ReadLabel)
    }
}

struct Constant(usize);

impl Classifier for Constant {
    fn classify(&self, _: &Matrix) -> solstep_core::Result<usize> {
        Ok(self.0)
    }
}

struct AlwaysZero;

impl Learner for AlwaysZero {
    type Model = Constant;
    fn fit(&self, _: &[FeatureWindow], _: &[FeatureWindow], _: u64) -> solstep_core::Result<Constant> {
        Ok(Constant(0))
    }
}

/// Records which subjects each fit saw.
#[derive(Default)]
struct Spy {
    seen: RefCell<Vec<(BTreeSet<String>, u64)>>,
}

impl Learner for Spy {
    type Model = Constant;
    fn fit(&self, train: &[FeatureWindow], val: &[FeatureWindow], seed: u64) -> solstep_core::Result<Constant> {
        let subjects = train.iter().chain(val).map(|w| w.subject_id.clone()).collect();
        self.seen.borrow_mut().push((subjects, seed));
        Ok(Constant(0))
    }
}

struct Failing;

impl Learner for Failing {
    type Model = Constant;
    fn fit(&self, _: &[FeatureWindow], _: &[FeatureWindow], _: u64) -> solstep_core::Result<Constant> {
        Err(Error::EmptyTrainingSet)
    }
}

fn check_kfold(n: usize, k: usize, seed: u64) -> Result<(), TestCaseError> {
    let windows = toy_windows(1, n, 1, Environment::Outdoor);
    let splits = split(&windows, &SplitPlan::new(Protocol::KFold { k }, seed)).unwrap();
    prop_assert_eq!(splits.len(), k);
    let mut covered = vec![0usize; n];
    let sizes: Vec<usize> = splits.iter().map(|s| s.test.len()).collect();
    for s in &splits {
        for &i in &s.test {
            covered[i] += 1;
        }
        let train: BTreeSet<_> = s.train.iter().collect();
        prop_assert_eq!(train.len() + s.test.len(), n);
        prop_assert!(s.test.iter().all(|i| !train.contains(i)));
    }
    prop_assert!(covered.iter().all(|&c| c == 1));
    prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    Ok(())
}

#[test]
fn ten_windows_five_folds() {
    check_kfold(10, 5, 3).unwrap();
    let windows = toy_windows(1, 10, 1, Environment::Outdoor);
    let splits = split(&windows, &SplitPlan::new(Protocol::KFold { k: 5 }, 3)).unwrap();
    assert!(splits.iter().all(|s| s.test.len() == 2));
    assert_eq!(splits[0].name, "fold1");
}

proptest! {
    #[test]
    fn kfold_partitions(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        check_kfold(n, k, seed)?;
    }
}

#[test]
fn kfold_is_seeded() {
    let windows = toy_windows(1, 50, 1, Environment::Outdoor);
    let a = split(&windows, &SplitPlan::new(Protocol::KFold { k: 5 }, 1)).unwrap();
    let b = split(&windows, &SplitPlan::new(Protocol::KFold { k: 5 }, 1)).unwrap();
    let c = split(&windows, &SplitPlan::new(Protocol::KFold { k: 5 }, 2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn split_errors() {
    let windows = toy_windows(1, 3, 1, Environment::Outdoor);
    let plan = |p| SplitPlan::new(p, 0);
    assert!(matches!(split(&windows, &plan(Protocol::KFold { k: 4 })), Err(Error::Plan(_))));
    assert!(matches!(split(&windows, &plan(Protocol::KFold { k: 1 })), Err(Error::Plan(_))));
    assert!(matches!(split(&[], &plan(Protocol::KFold { k: 2 })), Err(Error::Plan(_))));
    assert!(matches!(split(&windows, &plan(Protocol::LeaveOneUserOut)), Err(Error::Plan(_))));
    let same = Protocol::CrossEnvironment {
        train: Environment::Indoor,
        test: Environment::Indoor,
    };
    assert!(matches!(split(&windows, &plan(same)), Err(Error::Plan(_))));
    let missing = Protocol::CrossEnvironment {
        train: Environment::Outdoor,
        test: Environment::Indoor,
    };
    assert!(matches!(split(&windows, &plan(missing)), Err(Error::Plan(_))));
}

#[test]
fn louo_holds_out_each_subject() {
    let windows = toy_windows(6, 3, 4, Environment::Outdoor);
    let splits = split(&windows, &SplitPlan::new(Protocol::LeaveOneUserOut, 0)).unwrap();
    assert_eq!(splits.len(), 6);
    for s in &splits {
        assert!(s.test.iter().all(|&i| windows[i].subject_id == s.name));
        assert!(s.train.iter().all(|&i| windows[i].subject_id != s.name));
        assert_eq!(s.train.len() + s.test.len(), windows.len());
    }
}

#[test]
fn cross_environment_excludes_test_environment() {
    let mut windows = toy_windows(2, 3, 2, Environment::Outdoor);
    windows.extend(toy_windows(2, 3, 2, Environment::Indoor));
    let plan = SplitPlan::new(
        Protocol::CrossEnvironment {
            train: Environment::Outdoor,
            test: Environment::Indoor,
        },
        0,
    );
    let splits = split(&windows, &plan).unwrap();
    assert_eq!(splits.len(), 1);
    assert!(splits[0].train.iter().all(|&i| windows[i].environment == Environment::Outdoor));
    assert!(splits[0].test.iter().all(|&i| windows[i].environment == Environment::Indoor));
    assert_eq!(splits[0].train.len(), 12);
    assert_eq!(splits[0].test.len(), 12);
}

#[test]
fn oracle_scores_perfectly() {
    let ds = toy_dataset(toy_windows(3, 5, 4, Environment::Outdoor), 4);
    let cfg = PipelineConfig::default();
    let report = run_protocol(&ds, &cfg, &SplitPlan::new(Protocol::KFold { k: 5 }, 9), &Oracle).unwrap();
    assert_eq!(report.splits.len(), 5);
    assert_eq!(report.mean_accuracy, 1.0);
    for s in &report.splits {
        assert_eq!(s.confusion.total(), s.test_windows as u64);
        assert_eq!(s.confusion.trace(), s.confusion.total());
    }
    assert_eq!(report.pooled_confusion().total(), 60);
}

#[test]
fn constant_prediction_on_balanced_classes() {
    let ds = toy_dataset(toy_windows(4, 5, 4, Environment::Outdoor), 4);
    let cfg = PipelineConfig::default();
    let report = run_protocol(&ds, &cfg, &SplitPlan::new(Protocol::LeaveOneUserOut, 0), &AlwaysZero).unwrap();
    assert_eq!(report.splits.len(), 4);
    for s in &report.splits {
        assert_eq!(s.accuracy, 0.25);
        assert_eq!(s.confusion.counts[0], vec![5, 0, 0, 0]);
        assert_eq!(s.confusion.counts[3], vec![5, 0, 0, 0]);
    }
    assert_eq!(report.mean_accuracy, 0.25);
}

#[test]
fn louo_learner_never_sees_test_subject() {
    let ds = toy_dataset(toy_windows(4, 5, 2, Environment::Outdoor), 2);
    let spy = Spy::default();
    let plan = SplitPlan::new(Protocol::LeaveOneUserOut, 100);
    let report = run_protocol(&ds, &PipelineConfig::default(), &plan, &spy).unwrap();
    let seen = spy.seen.borrow();
    for (i, (s, (subjects, seed))) in report.splits.iter().zip(seen.iter()).enumerate() {
        assert!(!subjects.contains(&s.name));
        assert_eq!(subjects.len(), 3);
        assert_eq!(*seed, 100 + i as u64);
    }
}

#[test]
fn learner_errors_name_the_split() {
    let ds = toy_dataset(toy_windows(2, 5, 2, Environment::Outdoor), 2);
    let err = run_protocol(&ds, &PipelineConfig::default(), &SplitPlan::new(Protocol::LeaveOneUserOut, 0), &Failing)
        .unwrap_err();
    match err {
        Error::Split { split, source } => {
            assert_eq!(split, "S1");
            assert!(matches!(*source, Error::EmptyTrainingSet));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn confusion_matrix_counts() {
    let mut m = ConfusionMatrix::new(3);
    for (t, p) in [(0, 0), (0, 1), (1, 1), (2, 2), (2, 0)] {
        m.add(t, p).unwrap();
    }
    assert_eq!(m.total(), 5);
    assert_eq!(m.trace(), 3);
    assert_eq!(m.accuracy(), 0.6);
    assert!(m.add(3, 0).is_err());
    assert_eq!(ConfusionMatrix::new(2).accuracy(), 0.0);
}

proptest! {
    #[test]
    fn validation_carve_partitions_train(n in 0usize..200, frac in 0.0f64..0.9, seed in any::<u64>()) {
        let train: Vec<usize> = (0..n).map(|i| 3 * i).collect();
        let (tr, val) = carve_validation(&train, frac, seed);
        let mut all: Vec<usize> = tr.iter().chain(&val).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(&all, &train);
        prop_assert!(val.len() <= (n as f64 * frac).round() as usize);
        if !val.is_empty() {
            prop_assert!(!tr.is_empty());
        }
    }
}

fn small_recordings(subjects: usize, secs: f64) -> Vec<SyncedRecording> {
    let spec = DatasetSpec {
        n_subjects: subjects,
        seconds_per_activity: secs,
        ..DatasetSpec::default()
    };
    generate_dataset(&spec)
        .unwrap()
        .iter()
        .map(|s| s.synchronize(DEFAULT_RATE_HZ).unwrap())
        .collect()
}

fn tiny_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.model = ModelConfig {
        num_blocks: 1,
        num_heads: 1,
        head_size: 4,
        ff_channels: 4,
        mlp_units: 8,
        ..cfg.model
    };
    cfg.train.max_epochs = 2;
    cfg.train.batch_size = 32;
    cfg
}

#[test]
fn normalizer_ignores_test_windows() {
    let recs = small_recordings(2, 8.0);
    let cfg = tiny_config();
    let ds = build_dataset(&recs, &cfg).unwrap();
    let learner = TransformerLearner::new(&cfg, &ds);
    let plan = SplitPlan::new(Protocol::LeaveOneUserOut, 4);
    let s = &split(&ds.windows, &plan).unwrap()[0];
    let (clean, _) = fit_split(&ds, s, 4, cfg.val_fraction, &learner).unwrap();

    let mut poisoned = ds.clone();
    for &i in &s.test {
        let w = &mut poisoned.windows[i];
        w.values = Matrix::from_vec(w.values.rows(), w.values.cols(), vec![1e6; w.values.as_slice().len()]);
    }
    let (dirty, _) = fit_split(&poisoned, s, 4, cfg.val_fraction, &learner).unwrap();
    assert_eq!(clean.normalizer, dirty.normalizer);
    assert_eq!(clean.weights.data, dirty.weights.data);
}

#[test]
fn transformer_protocol_is_deterministic() {
    let recs = small_recordings(2, 8.0);
    let cfg = tiny_config();
    let ds = build_dataset(&recs, &cfg).unwrap();
    let learner = TransformerLearner::new(&cfg, &ds);
    let plan = SplitPlan::new(Protocol::KFold { k: 2 }, 11);
    let a = run_protocol(&ds, &cfg, &plan, &learner).unwrap();
    let b = run_protocol(&ds, &cfg, &plan, &learner).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.splits.len(), 2);
    let total: usize = a.splits.iter().map(|s| s.test_windows).sum();
    assert_eq!(total, ds.windows.len());
}

#[test]
fn overlap_sweep_window_counts_grow() {
    let recs = small_recordings(2, 10.0);
    let base = PipelineConfig::default();
    let plan = SplitPlan::new(Protocol::KFold { k: 2 }, 0);
    let axis = SweepAxis::Overlap(vec![0.0, 25.0, 50.0, 62.5, 75.0, 87.5, 93.75, 99.0]);
    let table = sweep(&recs, &base, &axis, |ds, cfg| run_protocol(ds, cfg, &plan, &AlwaysZero)).unwrap();
    assert_eq!(table.rows.len(), 8);
    assert_eq!(table.axis, "overlap_pct");
    for pair in table.rows.windows(2) {
        assert!(pair[0].window_count <= pair[1].window_count, "{pair:?}");
    }
    assert_eq!(table.rows[6].value, "93.75");
}

#[test]
fn placement_sweep_covers_all_configurations() {
    let recs = small_recordings(2, 6.0);
    let plan = SplitPlan::new(Protocol::LeaveOneUserOut, 0);
    let axis = SweepAxis::Placement(PlacementConfig::ALL.to_vec());
    let table = sweep(&recs, &PipelineConfig::default(), &axis, |ds, cfg| {
        assert_eq!(ds.windows[0].values.cols(), cfg.feature_dim());
        run_protocol(ds, cfg, &plan, &AlwaysZero)
    })
    .unwrap();
    let values: Vec<&str> = table.rows.iter().map(|r| r.value.as_str()).collect();
    assert_eq!(values, ["F", "FF", "W", "WW", "WF", "WF_cross", "WWFF"]);
}

#[test]
fn single_value_sweep_matches_plain_run() {
    let recs = small_recordings(2, 6.0);
    let cfg = tiny_config();
    let plan = SplitPlan::new(Protocol::KFold { k: 2 }, 5);
    let run = |ds: &Dataset, c: &PipelineConfig| run_protocol(ds, c, &plan, &TransformerLearner::new(c, ds));
    let table = sweep(&recs, &cfg, &SweepAxis::WindowSize(vec![cfg.window_sec]), run).unwrap();
    let ds = build_dataset(&recs, &cfg).unwrap();
    assert_eq!(table.reports[0], run(&ds, &cfg).unwrap());
    assert_eq!(table.rows[0].window_count, ds.windows.len());
}

#[test]
fn sweep_rejects_invalid_values() {
    let recs = small_recordings(2, 4.0);
    let plan = SplitPlan::new(Protocol::KFold { k: 2 }, 0);
    let base = PipelineConfig::default();
    for axis in [
        SweepAxis::Overlap(vec![50.0, 100.0]),
        SweepAxis::WindowSize(vec![0.0]),
        SweepAxis::Overlap(vec![]),
    ] {
        let r = sweep(&recs, &base, &axis, |ds, cfg| run_protocol(ds, cfg, &plan, &Oracle));
        assert!(matches!(r, Err(Error::Config(_))), "{axis:?}");
    }
}
