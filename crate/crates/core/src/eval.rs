//! Evaluation suites, the GP reference predictor and the value-scaling audit.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{gaussian_loglik, gp_posterior, GaussianPrediction, KernelSpec};
use crate::offgrid::{OffGridModel, Prediction};
use crate::rng::{stream, streams};
use crate::taskgen::{ood_y_scale, Task};
use crate::train::{Dataset, Suite, OOD_Y_FACTOR};

/// Anything that maps a task to per-target Gaussian marginals.
pub trait Predictor {
    fn predict(&self, task: &Task) -> Result<Prediction>;
}

impl Predictor for OffGridModel {
    fn predict(&self, task: &Task) -> Result<Prediction> {
        OffGridModel::predict(self, task)
    }
}

/// Exact GP posterior under the generating kernel.
#[derive(Clone, Copy, Debug)]
pub struct GpOracle(pub KernelSpec);

impl Predictor for GpOracle {
    fn predict(&self, task: &Task) -> Result<Prediction> {
        let post = gp_posterior(self.0, &task.x_context, &task.y_context, &task.x_target)?;
        Ok(Prediction {
            mean: post.mean,
            std: post.std,
            recon_loss: 0.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suite: String,
    /// Mean over repeats of the per-repeat average log-likelihood.
    pub mean_ll: f64,
    /// Sample standard deviation of the per-repeat averages (0 for one repeat).
    pub std_ll: f64,
    pub n_tasks: usize,
    pub repeats: usize,
    /// Mean predicted std when the targets are the context points.
    pub mean_ctx_std: f64,
    pub recon_loss: f64,
    /// Largest std change when every value is multiplied by ten.
    pub max_std_diff_under_y_scale: f64,
}

/// Base seed of repeat `repeat` of an evaluation keyed by `seed`.
pub fn suite_seed(seed: u64, repeat: usize) -> u64 {
    stream(seed, repeat as u64, streams::EVAL_SUITE).random()
}

/// The same task with its context points as targets.
pub fn context_as_targets(task: &Task) -> Task {
    Task {
        x_context: task.x_context.clone(),
        y_context: task.y_context.clone(),
        x_target: task.x_context.clone(),
        y_target: task.y_context.clone(),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn task_ll(model: &dyn Predictor, task: &Task) -> Result<(f64, Prediction)> {
    let pred = model.predict(task)?;
    let gauss = GaussianPrediction {
        mean: pred.mean.clone(),
        std: pred.std.clone(),
    };
    Ok((gaussian_loglik(&task.y_target, &gauss)?, pred))
}

/// Score `model` on `repeats` independent sets of `n_tasks` fresh tasks.
/// Sums run over task indices in order, so results do not depend on how the
/// work is scheduled.
pub fn evaluate(
    model: &dyn Predictor,
    dataset: &Dataset,
    suite: Suite,
    n_tasks: usize,
    repeats: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n_tasks == 0 || repeats == 0 {
        return Err(Error::contract("evaluation needs at least one task and one repeat"));
    }
    let mut repeat_means = Vec::with_capacity(repeats);
    let (mut ctx_std, mut recon, mut max_diff) = (0.0, 0.0, 0.0f64);
    for r in 0..repeats {
        let base = suite_seed(seed, r);
        let mut total = 0.0;
        for i in 0..n_tasks {
            let task = dataset.suite_task(suite, base, i as u64)?;
            let (ll, pred) = task_ll(model, &task)?;
            total += ll;
            recon += pred.recon_loss;
            let at_ctx = model.predict(&context_as_targets(&task))?;
            ctx_std += at_ctx.std.iter().sum::<f64>() / at_ctx.std.len() as f64;
            let scaled = model.predict(&ood_y_scale(&task, OOD_Y_FACTOR)?)?;
            max_diff = max_diff.max(max_abs_diff(&pred.std, &scaled.std));
        }
        repeat_means.push(total / n_tasks as f64);
    }
    let count = (n_tasks * repeats) as f64;
    let mean_ll = repeat_means.iter().sum::<f64>() / repeats as f64;
    let std_ll = if repeats > 1 {
        let ss: f64 = repeat_means.iter().map(|m| (m - mean_ll).powi(2)).sum();
        (ss / (repeats - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(EvalReport {
        suite: suite.name().to_string(),
        mean_ll,
        std_ll,
        n_tasks,
        repeats,
        mean_ctx_std: ctx_std / count,
        recon_loss: recon / count,
        max_std_diff_under_y_scale: max_diff,
    })
}

/// Outcome of comparing predicted std before and after scaling every value
/// by ten.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub n_tasks: usize,
    pub y_scale: f64,
    pub max_std_diff: f64,
    /// Tasks on which any std changed at all.
    pub tasks_changed: usize,
    pub mean_ctx_std: f64,
    pub mean_ctx_std_scaled: f64,
    pub per_task_max_diff: Vec<f64>,
}

pub fn ood_variance_audit(model: &dyn Predictor, dataset: &Dataset, n_tasks: usize, seed: u64) -> Result<AuditRecord> {
    if n_tasks == 0 {
        return Err(Error::contract("audit needs at least one task"));
    }
    let base = suite_seed(seed, 0);
    let mut per_task = Vec::with_capacity(n_tasks);
    let (mut ctx, mut ctx_scaled) = (0.0, 0.0);
    for i in 0..n_tasks {
        let task = dataset.task(base, i as u64)?;
        let scaled = ood_y_scale(&task, OOD_Y_FACTOR)?;
        let a = model.predict(&context_as_targets(&task))?;
        let b = model.predict(&context_as_targets(&scaled))?;
        let ta = model.predict(&task)?;
        let tb = model.predict(&scaled)?;
        per_task.push(max_abs_diff(&a.std, &b.std).max(max_abs_diff(&ta.std, &tb.std)));
        ctx += a.std.iter().sum::<f64>() / a.std.len() as f64;
        ctx_scaled += b.std.iter().sum::<f64>() / b.std.len() as f64;
    }
    Ok(AuditRecord {
        n_tasks,
        y_scale: OOD_Y_FACTOR,
        max_std_diff: per_task.iter().copied().fold(0.0, f64::max),
        tasks_changed: per_task.iter().filter(|&&d| d != 0.0).count(),
        mean_ctx_std: ctx / n_tasks as f64,
        mean_ctx_std_scaled: ctx_scaled / n_tasks as f64,
        per_task_max_diff: per_task,
    })
}

/// One JSON record per line.
pub fn write_jsonl<T: Serialize>(mut out: impl Write, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(records)
}
