//! The five subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use npprov_core::checkpoint::{encode_checkpoint, load_checkpoint, Checkpoint};
use npprov_core::config::{ConfigMap, OFFGRID_KEYS, ONGRID_KEYS, TRAIN_KEYS};
use npprov_core::eval::{evaluate, ood_variance_audit, EvalReport};
use npprov_core::offgrid::{build_grid, ModelKind, OffGridConfig, OffGridModel};
use npprov_core::ongrid::{load_idx_images, synthetic_strokes, train_ongrid, OnGridConfig, OnGridModel};
use npprov_core::taskgen::{load_smart_meter, write_task_archive, Task};
use npprov_core::train::{train as train_offgrid, Dataset, DatasetKind, Suite, TrainConfig};
use npprov_core::Error;
use serde::Serialize;

use crate::cli::{AuditArgs, EvalArgs, PlotArgs, SampleArgs, TrainArgs};
use crate::failure::{CliResult, Failure};
use crate::output::{jsonl, write_atomic};
use crate::settings::{Flags, Settings};

/// Side length of generated stroke images.
const SYNTHETIC_SIDE: usize = 28;

fn with_keys(base: &[&'static str], extra: &[&'static str]) -> Vec<&'static str> {
    base.iter().chain(extra).copied().collect()
}

/// A setting given as a flag, else in the config file.
fn early_setting(flag: Option<&String>, file: Option<&ConfigMap>, key: &str) -> Option<String> {
    flag.cloned().or_else(|| file.and_then(|f| f.raw(key)).map(str::to_string))
}

fn parse_dataset(name: &str) -> CliResult<DatasetKind> {
    name.parse().map_err(|e: Error| Failure::usage(e.to_string()))
}

/// Task source for a one-dimensional dataset.
fn task_source(kind: DatasetKind, data: Option<PathBuf>) -> CliResult<Dataset> {
    if let Some(spec) = kind.kernel() {
        return Ok(Dataset::Gp(spec));
    }
    match kind {
        DatasetKind::SmartMeter => {
            let path = data.ok_or_else(|| Failure::usage("the smartmeter dataset needs --data <csv>"))?;
            Ok(Dataset::SmartMeter(load_smart_meter(&path)?))
        }
        _ => Err(Failure::usage(format!("dataset {kind} has no one-dimensional tasks"))),
    }
}

fn parse_suites(raw: &str) -> CliResult<Vec<Suite>> {
    raw.split(',')
        .map(|s| s.trim().parse().map_err(|e: Error| Failure::usage(e.to_string())))
        .collect()
}

/// An off-grid checkpoint and the dataset it was trained on, if recorded.
fn load_offgrid(path: &Path) -> CliResult<(OffGridModel, Option<DatasetKind>)> {
    let ckpt = load_checkpoint(path).map_err(Failure::from_input)?;
    let arch = ckpt.architecture().map_err(Failure::from_input)?;
    if arch != OffGridModel::ARCHITECTURE {
        return Err(Failure::data(format!(
            "{}: holds a {arch} model, but one-dimensional tasks need an {} model",
            path.display(),
            OffGridModel::ARCHITECTURE
        )));
    }
    let model = OffGridModel::from_checkpoint(&ckpt).map_err(Failure::from_input)?;
    let trained_on = ckpt.train_config().map_err(Failure::from_input)?.map(|c| c.dataset);
    Ok((model, trained_on))
}

/// Settings shared by the commands that read a checkpoint: the dataset
/// defaults to the one recorded in the checkpoint.
fn checkpoint_settings(
    defaults: ConfigMap,
    file: Option<&ConfigMap>,
    allowed: &[&str],
    flags: Flags,
) -> CliResult<(Settings, OffGridModel, Dataset)> {
    let mut s = Settings::resolve(defaults, file, allowed, flags)?;
    let (model, trained_on) = load_offgrid(&s.path("checkpoint")?)?;
    if s.map.raw("dataset").is_none() {
        let kind = trained_on
            .ok_or_else(|| Failure::usage("checkpoint records no dataset; pass --dataset"))?;
        s.map.set("dataset", kind);
    }
    s.map.set("model", model.kind);
    let kind = parse_dataset(&s.required("dataset")?)?;
    let dataset = task_source(kind, s.optional_path("data"))?;
    Ok((s, model, dataset))
}

#[derive(Serialize)]
struct TraceRecord {
    epoch: usize,
    loss: f64,
}

pub fn train(args: &TrainArgs, file: Option<&ConfigMap>) -> CliResult<()> {
    let dataset = early_setting(args.dataset.as_ref(), file, "dataset")
        .ok_or_else(|| Failure::usage("missing required setting \"dataset\" (flag --dataset)"))?;
    let dataset = parse_dataset(&dataset)?;
    let model = match early_setting(args.model.as_ref(), file, "model") {
        Some(m) => m.parse().map_err(|e: Error| Failure::usage(e.to_string()))?,
        None => ModelKind::NpProv,
    };
    let on_grid = dataset == DatasetKind::Mnist;
    if on_grid && model != ModelKind::NpProv {
        return Err(Failure::usage("the image dataset trains np-prov only"));
    }
    let base = if args.full {
        TrainConfig::full(dataset, model, 0)
    } else {
        TrainConfig::desk(dataset, model, 0)
    };
    let mut defaults = ConfigMap::new();
    base.write_entries(&mut defaults);
    let allowed = if on_grid {
        OnGridConfig::default().write_entries(&mut defaults);
        defaults.set("synthetic_images", 512);
        with_keys(&TRAIN_KEYS, &ONGRID_KEYS)
    } else {
        OffGridConfig::default().write_entries(&mut defaults);
        with_keys(&TRAIN_KEYS, &OFFGRID_KEYS)
    };
    let allowed = with_keys(&allowed, &["out", "trace", "data", "images", "synthetic_images"]);
    let flags = Flags::new()
        .add("dataset", args.dataset.as_ref())
        .add("model", args.model.as_ref())
        .add("epochs", args.epochs)
        .add("tasks_per_epoch", args.tasks_per_epoch)
        .add("batch_size", args.batch_size)
        .add("learning_rate", args.learning_rate)
        .add("seed", args.source.seed)
        .add("synthetic_images", args.synthetic_images)
        .path("out", args.out.as_ref())
        .path("trace", args.trace.as_ref())
        .path("data", args.source.data.as_ref())
        .path("images", args.images.as_ref());
    let mut s = Settings::resolve(defaults, file, &allowed, flags)?;
    let out = s.path("out")?;
    if s.map.raw("trace").is_none() {
        s.map.set("trace", format!("{}.trace.jsonl", out.display()));
    }
    let trace_path = s.path("trace")?;
    let cfg = TrainConfig::from_entries(&s.map).map_err(|e| Failure::usage(e.to_string()))?;
    s.echo("train");

    let mut trace = Vec::new();
    let on_epoch = |epoch: usize, loss: f64| {
        println!("epoch {} loss {loss:.6}", epoch + 1);
        trace.push(TraceRecord { epoch: epoch + 1, loss });
    };
    let (ckpt, outcome): (Checkpoint, npprov_core::Result<Vec<f64>>) = if on_grid {
        let arch = OnGridConfig::from_entries(&s.map).map_err(|e| Failure::usage(e.to_string()))?;
        let images = match s.optional_path("images") {
            Some(path) => load_idx_images(&path)?,
            None => synthetic_strokes(s.get("synthetic_images")?, SYNTHETIC_SIDE, cfg.seed),
        };
        let mut model = OnGridModel::new(arch, cfg.seed)?;
        let outcome = train_ongrid(&mut model, &images, &cfg, on_epoch);
        (model.to_checkpoint(Some(&cfg)), outcome)
    } else {
        let arch = OffGridConfig::from_entries(&s.map).map_err(|e| Failure::usage(e.to_string()))?;
        let source = task_source(dataset, s.optional_path("data"))?;
        let mut model = OffGridModel::new(model, arch, cfg.seed)?;
        let outcome = train_offgrid(&mut model, &source, &cfg, on_epoch);
        (model.to_checkpoint(Some(&cfg)), outcome)
    };
    // On failure the parameters are those of the last completed step; keep
    // them so the run can be inspected or resumed.
    write_atomic(&out, &encode_checkpoint(&ckpt)?)?;
    write_atomic(&trace_path, &jsonl(&trace))?;
    outcome?;
    println!("wrote {} and {}", out.display(), trace_path.display());
    Ok(())
}

pub fn eval(args: &EvalArgs, file: Option<&ConfigMap>) -> CliResult<()> {
    let mut defaults = ConfigMap::new();
    defaults.set("suite", Suite::InRange);
    defaults.set("n_tasks", 2048);
    defaults.set("repeats", 6);
    defaults.set("seed", 0);
    let allowed = ["checkpoint", "suite", "n_tasks", "repeats", "dataset", "out", "data", "seed"];
    let flags = Flags::new()
        .path("checkpoint", args.checkpoint.as_ref())
        .add("suite", args.suite.as_ref())
        .add("n_tasks", args.n_tasks)
        .add("repeats", args.repeats)
        .add("dataset", args.dataset.as_ref())
        .path("out", args.out.as_ref())
        .path("data", args.source.data.as_ref())
        .add("seed", args.source.seed);
    let (s, model, dataset) = checkpoint_settings(defaults, file, &allowed, flags)?;
    let suites = parse_suites(&s.required("suite")?)?;
    let (n_tasks, repeats, seed): (usize, usize, u64) = (s.get("n_tasks")?, s.get("repeats")?, s.get("seed")?);
    let out = s.path("out")?;
    s.echo("eval");
    let reports = suites
        .iter()
        .map(|&suite| {
            let r = evaluate(&model, &dataset, suite, n_tasks, repeats, seed)?;
            println!("{suite}: mean_ll {:.4} +- {:.4}", r.mean_ll, r.std_ll);
            Ok(r)
        })
        .collect::<npprov_core::Result<Vec<EvalReport>>>()?;
    write_atomic(&out, &jsonl(&reports))?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn audit_variance(args: &AuditArgs, file: Option<&ConfigMap>) -> CliResult<()> {
    let mut defaults = ConfigMap::new();
    defaults.set("n_tasks", 256);
    defaults.set("seed", 0);
    let allowed = ["checkpoint", "n_tasks", "dataset", "out", "data", "seed"];
    let flags = Flags::new()
        .path("checkpoint", args.checkpoint.as_ref())
        .add("n_tasks", args.n_tasks)
        .add("dataset", args.dataset.as_ref())
        .path("out", args.out.as_ref())
        .path("data", args.source.data.as_ref())
        .add("seed", args.source.seed);
    let (s, model, dataset) = checkpoint_settings(defaults, file, &allowed, flags)?;
    let (n_tasks, seed): (usize, u64) = (s.get("n_tasks")?, s.get("seed")?);
    let out = s.path("out")?;
    s.echo("audit-variance");
    let record = ood_variance_audit(&model, &dataset, n_tasks, seed)?;
    println!(
        "max std difference {:e} on {} tasks, {} changed",
        record.max_std_diff, record.n_tasks, record.tasks_changed
    );
    write_atomic(&out, &jsonl(&[record]))?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Task `index` of the archive written by `sample-tasks` with the same
/// dataset, suite and seed.
fn archive_task(dataset: &Dataset, suite: Suite, seed: u64, index: u64) -> CliResult<Task> {
    Ok(dataset.suite_task(suite, seed, index)?)
}

pub fn sample_tasks(args: &SampleArgs, file: Option<&ConfigMap>) -> CliResult<()> {
    let mut defaults = ConfigMap::new();
    defaults.set("suite", Suite::InRange);
    defaults.set("count", 16);
    defaults.set("seed", 0);
    let allowed = ["dataset", "suite", "count", "out", "data", "seed"];
    let flags = Flags::new()
        .add("dataset", args.dataset.as_ref())
        .add("suite", args.suite.as_ref())
        .add("count", args.count)
        .path("out", args.out.as_ref())
        .path("data", args.source.data.as_ref())
        .add("seed", args.source.seed);
    let s = Settings::resolve(defaults, file, &allowed, flags)?;
    let kind = parse_dataset(&s.required("dataset")?)?;
    let suite: Suite = s.get("suite")?;
    let (count, seed): (u64, u64) = (s.get("count")?, s.get("seed")?);
    let out = s.path("out")?;
    let dataset = task_source(kind, s.optional_path("data"))?;
    s.echo("sample-tasks");
    let tasks = (0..count)
        .map(|i| archive_task(&dataset, suite, seed, i))
        .collect::<CliResult<Vec<_>>>()?;
    let mut bytes = Vec::new();
    write_task_archive(&mut bytes, &tasks).expect("writing to memory cannot fail");
    write_atomic(&out, &bytes)?;
    println!("wrote {count} tasks to {}", out.display());
    Ok(())
}

pub fn export_plot(args: &PlotArgs, file: Option<&ConfigMap>) -> CliResult<()> {
    let mut defaults = ConfigMap::new();
    defaults.set("task_index", 0);
    defaults.set("suite", Suite::InRange);
    defaults.set("seed", 0);
    let allowed = ["checkpoint", "task_index", "suite", "dataset", "out", "data", "seed"];
    let flags = Flags::new()
        .path("checkpoint", args.checkpoint.as_ref())
        .add("task_index", args.task_index)
        .add("suite", args.suite.as_ref())
        .add("dataset", args.dataset.as_ref())
        .path("out", args.out.as_ref())
        .path("data", args.source.data.as_ref())
        .add("seed", args.source.seed);
    let (s, model, dataset) = checkpoint_settings(defaults, file, &allowed, flags)?;
    let suite: Suite = s.get("suite")?;
    let (index, seed): (u64, u64) = (s.get("task_index")?, s.get("seed")?);
    let out = s.path("out")?;
    s.echo("export-plot");
    let task = archive_task(&dataset, suite, seed, index)?;
    let grid = build_grid(&task.all_positions(), &model.config.grid, model.config.unet().multiple())?;
    // Grid and target predictions come from one forward pass.
    let query = Task {
        x_target: grid.iter().chain(&task.x_target).copied().collect(),
        y_target: vec![0.0; grid.len()].into_iter().chain(task.y_target.iter().copied()).collect(),
        ..task.clone()
    };
    let pred = model.predict(&query)?;
    let mut text = String::from("kind\tx\ty\tmean\tstd\n");
    for (i, x) in grid.iter().enumerate() {
        writeln!(text, "grid\t{x}\t\t{}\t{}", pred.mean[i], pred.std[i]).expect("string write");
    }
    for (x, y) in task.x_context.iter().zip(&task.y_context) {
        writeln!(text, "context\t{x}\t{y}\t\t").expect("string write");
    }
    for (j, (x, y)) in task.x_target.iter().zip(&task.y_target).enumerate() {
        let k = grid.len() + j;
        writeln!(text, "target\t{x}\t{y}\t{}\t{}", pred.mean[k], pred.std[k]).expect("string write");
    }
    write_atomic(&out, text.as_bytes())?;
    println!(
        "wrote {} grid, {} context and {} target rows to {}",
        grid.len(),
        task.n_context(),
        task.n_target(),
        out.display()
    );
    Ok(())
}
