//! Training loop and task datasets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::KernelSpec;
use crate::offgrid::{ModelKind, OffGridModel};
use crate::optim::Adam;
use crate::params::Bound;
use crate::taskgen::{
    compacted_context_task, compacted_smartmeter_task, ood_x_config, ood_y_scale, sample_smartmeter_task,
    sample_synthetic_task, SmartMeterSeries, Task, TaskConfig, TaskSource, SMART_METER_COMPACT_INTERVALS,
    SYNTHETIC_COMPACT_INTERVALS,
};
use crate::{Gradients, Graph, ParamStore, Var};

/// Factor applied to every value in the out-of-range value suite.
pub const OOD_Y_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    Eq,
    Matern,
    WeaklyPeriodic,
    SmartMeter,
    Mnist,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 5] = [
        DatasetKind::Eq,
        DatasetKind::Matern,
        DatasetKind::WeaklyPeriodic,
        DatasetKind::SmartMeter,
        DatasetKind::Mnist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Eq => "eq",
            DatasetKind::Matern => "matern",
            DatasetKind::WeaklyPeriodic => "weakly-periodic",
            DatasetKind::SmartMeter => "smartmeter",
            DatasetKind::Mnist => "mnist",
        }
    }

    /// The generating kernel of a synthetic dataset.
    pub fn kernel(self) -> Option<KernelSpec> {
        match self {
            DatasetKind::Eq => Some(KernelSpec::Eq),
            DatasetKind::Matern => Some(KernelSpec::Matern52),
            DatasetKind::WeaklyPeriodic => Some(KernelSpec::WeaklyPeriodic),
            DatasetKind::SmartMeter | DatasetKind::Mnist => None,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                Error::contract(format!(
                    "unknown dataset {s:?} (expected eq, matern, weakly-periodic, smartmeter or mnist)"
                ))
            })
    }
}

/// Evaluation protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    InRange,
    OodX,
    OodY,
    Compacted,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::InRange, Suite::OodX, Suite::OodY, Suite::Compacted];

    pub fn name(self) -> &'static str {
        match self {
            Suite::InRange => "in-range",
            Suite::OodX => "ood-x",
            Suite::OodY => "ood-y",
            Suite::Compacted => "compacted",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| {
            Error::contract(format!(
                "unknown suite {s:?} (expected in-range, ood-x, ood-y or compacted)"
            ))
        })
    }
}

/// A source of one-dimensional regression tasks.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Gp(KernelSpec),
    SmartMeter(SmartMeterSeries),
}

impl Dataset {
    pub fn source(&self) -> TaskSource {
        match self {
            Dataset::Gp(_) => TaskSource::Synthetic,
            Dataset::SmartMeter(_) => TaskSource::SmartMeter,
        }
    }

    /// Training-range task configuration.
    pub fn task_config(&self, base_seed: u64) -> TaskConfig {
        match self {
            Dataset::Gp(_) => TaskConfig::synthetic(base_seed),
            Dataset::SmartMeter(_) => TaskConfig::smart_meter(base_seed),
        }
    }

    /// Training-range task `index`.
    pub fn task(&self, base_seed: u64, index: u64) -> Result<Task> {
        self.suite_task(Suite::InRange, base_seed, index)
    }

    pub fn suite_task(&self, suite: Suite, base_seed: u64, index: u64) -> Result<Task> {
        let cfg = self.task_config(base_seed);
        match (suite, self) {
            (Suite::InRange, Dataset::Gp(k)) => sample_synthetic_task(*k, &cfg, index),
            (Suite::InRange, Dataset::SmartMeter(s)) => sample_smartmeter_task(s, &cfg, index),
            (Suite::OodX, Dataset::Gp(k)) => sample_synthetic_task(*k, &ood_x_config(&cfg, self.source()), index),
            (Suite::OodX, Dataset::SmartMeter(s)) => {
                sample_smartmeter_task(s, &ood_x_config(&cfg, self.source()), index)
            }
            (Suite::OodY, _) => ood_y_scale(&self.suite_task(Suite::InRange, base_seed, index)?, OOD_Y_FACTOR),
            (Suite::Compacted, Dataset::Gp(k)) => {
                compacted_context_task(*k, &SYNTHETIC_COMPACT_INTERVALS, &cfg, index)
            }
            (Suite::Compacted, Dataset::SmartMeter(s)) => {
                compacted_smartmeter_task(s, &SMART_METER_COMPACT_INTERVALS, &cfg, index)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub tasks_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dataset: DatasetKind,
    pub model: ModelKind,
}

impl TrainConfig {
    /// Small-budget defaults: 30 epochs of 64 tasks in batches of 16.
    pub fn desk(dataset: DatasetKind, model: ModelKind, seed: u64) -> Self {
        TrainConfig {
            epochs: 30,
            tasks_per_epoch: 64,
            batch_size: 16,
            learning_rate: 5e-3,
            seed,
            dataset,
            model,
        }
    }

    /// The full protocol: 200 epochs of 256 tasks.
    pub fn full(dataset: DatasetKind, model: ModelKind, seed: u64) -> Self {
        TrainConfig {
            epochs: 200,
            tasks_per_epoch: 256,
            ..Self::desk(dataset, model, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.tasks_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::contract("epochs, tasks per epoch and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::contract(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.tasks_per_epoch.div_ceil(self.batch_size)
    }
}

/// Optimize `params` for `cfg.epochs` epochs. `example_loss(g, p, i)` builds
/// the loss of training example `i` (examples are numbered consecutively
/// across epochs). Each batch's gradient is the mean over its examples.
/// Returns the mean loss of every epoch; `on_epoch` sees each as it
/// completes.
///
/// On error the parameters hold the result of the last completed step.
pub fn fit(
    params: &mut ParamStore,
    cfg: &TrainConfig,
    mut example_loss: impl FnMut(&Graph, &Bound, u64) -> Result<Var>,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let first = (epoch * cfg.tasks_per_epoch) as u64;
        let mut epoch_total = 0.0;
        for batch in 0..cfg.batches_per_epoch() {
            let start = batch * cfg.batch_size;
            let end = (start + cfg.batch_size).min(cfg.tasks_per_epoch);
            let weight = 1.0 / (end - start) as f64;
            let mut grads = Gradients::default();
            for k in start..end {
                let g = Graph::new();
                let p = params.bind(&g);
                let loss = example_loss(&g, &p, first + k as u64)?;
                epoch_total += g.value(loss).item()?;
                grads.accumulate(&g.backward(loss)?, weight);
            }
            adam.step(params, &grads)?;
        }
        let mean = epoch_total / cfg.tasks_per_epoch as f64;
        on_epoch(epoch, mean);
        trace.push(mean);
    }
    Ok(trace)
}

/// Train an off-grid model on tasks drawn from `dataset` with `cfg.seed`.
pub fn train(
    model: &mut OffGridModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if cfg.model != model.kind {
        return Err(Error::contract(format!(
            "config trains {} but the model is {}",
            cfg.model, model.kind
        )));
    }
    let frozen = model.clone();
    fit(
        &mut model.params,
        cfg,
        |g, p, i| {
            let task = dataset.task(cfg.seed, i)?;
            frozen.loss(g, p, &task)
        },
        on_epoch,
    )
}

/// Moving average with a trailing window, shorter at the start.
pub fn smooth(trace: &[f64], window: usize) -> Vec<f64> {
    (0..trace.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            trace[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offgrid::{GridSpec, OffGridConfig};

    pub(crate) fn tiny_config() -> OffGridConfig {
        OffGridConfig {
            grid: GridSpec {
                points_per_unit: 16,
                margin: 0.1,
            },
            self_channels: 2,
            fused_channels: 3,
            unet_base: 2,
            unet_levels: 6,
            kernel_size: 5,
            out_channels: 3,
            grid_self_channels: 2,
            normalize_decoder: true,
        }
    }

    fn tiny_train(epochs: usize, tasks: usize) -> (OffGridModel, Vec<f64>) {
        let mut model = OffGridModel::new(ModelKind::NpProv, tiny_config(), 1).unwrap();
        let cfg = TrainConfig {
            epochs,
            tasks_per_epoch: tasks,
            batch_size: 2,
            learning_rate: 1e-3,
            ..TrainConfig::desk(DatasetKind::Eq, ModelKind::NpProv, 4)
        };
        let trace = train(&mut model, &Dataset::Gp(KernelSpec::Eq), &cfg, |_, _| {}).unwrap();
        (model, trace)
    }

    #[test]
    fn one_epoch_smoke() {
        let (model, trace) = tiny_train(1, 4);
        assert_eq!(trace.len(), 1);
        assert!(trace[0].is_finite());
        let fresh = OffGridModel::new(ModelKind::NpProv, tiny_config(), 1).unwrap();
        assert_ne!(model.params, fresh.params);
    }

    #[test]
    fn training_is_deterministic() {
        let (a, ta) = tiny_train(2, 3);
        let (b, tb) = tiny_train(2, 3);
        assert_eq!(ta, tb);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn model_mismatch_rejected() {
        let mut model = OffGridModel::new(ModelKind::ConvCnp, tiny_config(), 1).unwrap();
        let cfg = TrainConfig::desk(DatasetKind::Eq, ModelKind::NpProv, 0);
        assert!(train(&mut model, &Dataset::Gp(KernelSpec::Eq), &cfg, |_, _| {}).is_err());
    }

    #[test]
    fn names_round_trip() {
        for d in DatasetKind::ALL {
            assert_eq!(d.name().parse::<DatasetKind>().unwrap(), d);
        }
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("mnist-color".parse::<DatasetKind>().is_err());
    }

    #[test]
    fn suites_differ_as_described() {
        let data = Dataset::Gp(KernelSpec::Eq);
        let base = data.suite_task(Suite::InRange, 3, 5).unwrap();
        let scaled = data.suite_task(Suite::OodY, 3, 5).unwrap();
        assert_eq!(base.x_context, scaled.x_context);
        assert!((scaled.y_context[0] - 10.0 * base.y_context[0]).abs() < 1e-12);
        let wide = data.suite_task(Suite::OodX, 3, 5).unwrap();
        assert!(wide.all_positions().iter().all(|x| (-5.0..=5.0).contains(x)));
        let compact = data.suite_task(Suite::Compacted, 3, 5).unwrap();
        assert!(compact
            .x_context
            .iter()
            .all(|&x| crate::taskgen::in_intervals(x, &SYNTHETIC_COMPACT_INTERVALS)));
    }

    #[test]
    fn smoothing() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }
}
