//! Fold-level parallel evaluation. Each split owns its model and seed, so
//! the report matches the serial one exactly.

use solstep_core::harness::{assemble_report, run_protocol, run_split, split, EvalReport, Learner, SplitPlan};
use solstep_core::pipeline::{Dataset, PipelineConfig};

use solstep_core::Result;

/// Runs the splits of `plan` on the rayon pool when the `parallel` feature is
/// enabled and `parallel` is set, serially otherwise.
pub fn run_protocol_with<L>(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    plan: &SplitPlan,
    learner: &L,
    parallel: bool,
) -> Result<EvalReport>
where
    L: Learner + Sync,
{
    if !parallel || !cfg!(feature = "parallel") {
        return run_protocol(dataset, cfg, plan, learner);
    }
    let splits = split(&dataset.windows, plan)?;
    let reports = par_map(&splits, |i, s| run_split(dataset, s, i, plan, cfg.val_fraction, learner))?;
    Ok(assemble_report(dataset, cfg, plan, reports))
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> solstep_core::Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> solstep_core::Result<R> + Sync,
{
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> solstep_core::Result<Vec<R>>
where
    F: Fn(usize, &T) -> solstep_core::Result<R>,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}
