//! Few-shot regression tasks: GP draws, Smart Meter clips and the
//! out-of-domain transformations.

use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{gp_sample, KernelSpec};
use crate::rng::{self, streams};

/// Maximum distance of a compacted-suite target from an interval edge.
pub const ADJACENT_DISTANCE: f64 = 0.25;
const MAX_CLIP_ATTEMPTS: usize = 100;
const MIN_WINDOW_POINTS: usize = 6;
const SECONDS_PER_DAY: f64 = 86_400.0;

/// Context intervals of the compacted suite on GP data.
pub const SYNTHETIC_COMPACT_INTERVALS: [[f64; 2]; 2] = [[-1.0, -0.5], [1.2, 1.7]];
/// Context intervals of the compacted suite on Smart Meter data.
pub const SMART_METER_COMPACT_INTERVALS: [[f64; 2]; 2] = [[0.2, 0.4], [0.8, 1.1]];

/// One regression problem: context points to condition on and target points to score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub x_context: Vec<f64>,
    pub y_context: Vec<f64>,
    pub x_target: Vec<f64>,
    pub y_target: Vec<f64>,
}

impl Task {
    pub fn new(x_context: Vec<f64>, y_context: Vec<f64>, x_target: Vec<f64>, y_target: Vec<f64>) -> Result<Self> {
        let task = Task {
            x_context,
            y_context,
            x_target,
            y_target,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_context.len() != self.y_context.len() || self.x_target.len() != self.y_target.len() {
            return Err(Error::contract(format!(
                "task lengths disagree: context {}/{}, target {}/{}",
                self.x_context.len(),
                self.y_context.len(),
                self.x_target.len(),
                self.y_target.len()
            )));
        }
        if self.x_context.is_empty() || self.x_target.is_empty() {
            return Err(Error::contract("a task needs at least one context and one target point"));
        }
        let all = [&self.x_context, &self.y_context, &self.x_target, &self.y_target];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::contract("task holds a non-finite coordinate"));
        }
        Ok(())
    }

    pub fn n_context(&self) -> usize {
        self.x_context.len()
    }

    pub fn n_target(&self) -> usize {
        self.x_target.len()
    }

    /// Every position, context first.
    pub fn all_positions(&self) -> Vec<f64> {
        self.x_context.iter().chain(&self.x_target).copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub x_low: f64,
    pub x_high: f64,
    pub n_points_low: usize,
    pub n_points_high: usize,
    pub batch_size: usize,
    pub tasks_per_epoch: usize,
    pub base_seed: u64,
}

impl TaskConfig {
    /// GP tasks on the training range `[-2, 2]`.
    pub fn synthetic(base_seed: u64) -> Self {
        TaskConfig {
            x_low: -2.0,
            x_high: 2.0,
            n_points_low: 3,
            n_points_high: 50,
            batch_size: 16,
            tasks_per_epoch: 256,
            base_seed,
        }
    }

    /// Two-day Smart Meter windows mapped to `[0, 2]`.
    pub fn smart_meter(base_seed: u64) -> Self {
        TaskConfig {
            x_low: 0.0,
            x_high: 2.0,
            ..Self::synthetic(base_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_low < self.x_high) || !self.x_low.is_finite() || !self.x_high.is_finite() {
            return Err(Error::contract(format!(
                "task range [{}, {}] is empty",
                self.x_low, self.x_high
            )));
        }
        if self.n_points_low < 1 || self.n_points_low > self.n_points_high {
            return Err(Error::contract(format!(
                "point count range {}..={} is invalid",
                self.n_points_low, self.n_points_high
            )));
        }
        if self.batch_size == 0 || self.tasks_per_epoch == 0 {
            return Err(Error::contract("batch size and tasks per epoch must be positive"));
        }
        Ok(())
    }
}

/// Where a task's values come from; decides the out-of-range x interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskSource {
    Synthetic,
    SmartMeter,
}

/// Widen the position range for the out-of-range suite.
pub fn ood_x_config(cfg: &TaskConfig, source: TaskSource) -> TaskConfig {
    let (x_low, x_high) = match source {
        TaskSource::Synthetic => (-5.0, 5.0),
        TaskSource::SmartMeter => (-1.0, 5.0),
    };
    TaskConfig {
        x_low,
        x_high,
        ..cfg.clone()
    }
}

/// Multiply every value by `factor`; positions are left alone.
pub fn ood_y_scale(task: &Task, factor: f64) -> Result<Task> {
    if !factor.is_finite() || factor == 0.0 {
        return Err(Error::contract(format!("y scale factor {factor} must be finite and nonzero")));
    }
    Ok(Task {
        x_context: task.x_context.clone(),
        y_context: task.y_context.iter().map(|y| y * factor).collect(),
        x_target: task.x_target.clone(),
        y_target: task.y_target.iter().map(|y| y * factor).collect(),
    })
}

fn draw_count(rng: &mut impl Rng, cfg: &TaskConfig) -> usize {
    rng.random_range(cfg.n_points_low..=cfg.n_points_high)
}

/// Values for context and target come from one joint GP draw.
fn gp_task(spec: KernelSpec, xc: Vec<f64>, xt: Vec<f64>, cfg: &TaskConfig, task_index: u64) -> Result<Task> {
    let seed: u64 = rng::stream(cfg.base_seed, task_index, streams::GP_DRAW).random();
    let all: Vec<f64> = xc.iter().chain(&xt).copied().collect();
    let mut ys = gp_sample(spec, &all, seed)?;
    let yt = ys.split_off(xc.len());
    Task::new(xc, ys, xt, yt)
}

pub fn sample_synthetic_task(spec: KernelSpec, cfg: &TaskConfig, task_index: u64) -> Result<Task> {
    cfg.validate()?;
    let mut sizes = rng::stream(cfg.base_seed, task_index, streams::TASK_SIZES);
    let n = draw_count(&mut sizes, cfg);
    let m = draw_count(&mut sizes, cfg);
    let mut pos = rng::stream(cfg.base_seed, task_index, streams::TASK_POSITIONS);
    let mut uniform = |k: usize| -> Vec<f64> {
        (0..k).map(|_| pos.random_range(cfg.x_low..=cfg.x_high)).collect()
    };
    let xc = uniform(n);
    let xt = uniform(m);
    gp_task(spec, xc, xt, cfg, task_index)
}

fn validate_intervals(intervals: &[[f64; 2]]) -> Result<()> {
    if intervals.is_empty() {
        return Err(Error::Degenerate("no context intervals".into()));
    }
    for &[lo, hi] in intervals {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Degenerate(format!("context interval [{lo}, {hi}] has no width")));
        }
    }
    Ok(())
}

pub fn in_intervals(x: f64, intervals: &[[f64; 2]]) -> bool {
    intervals.iter().any(|&[lo, hi]| lo <= x && x <= hi)
}

/// Distance from `x` to the nearest interval edge.
pub fn edge_distance(x: f64, intervals: &[[f64; 2]]) -> f64 {
    intervals
        .iter()
        .flat_map(|&[lo, hi]| [(x - lo).abs(), (x - hi).abs()])
        .fold(f64::INFINITY, f64::min)
}

/// Uniform draw over the union of intervals.
fn draw_in_union(rng: &mut impl Rng, intervals: &[[f64; 2]]) -> f64 {
    let total: f64 = intervals.iter().map(|[lo, hi]| hi - lo).sum();
    let mut u = rng.random_range(0.0..total);
    for &[lo, hi] in intervals {
        if u < hi - lo {
            return lo + u;
        }
        u -= hi - lo;
    }
    intervals[intervals.len() - 1][1]
}

/// Uniform draw within [`ADJACENT_DISTANCE`] of a uniformly chosen edge.
fn draw_near_edge(rng: &mut impl Rng, intervals: &[[f64; 2]]) -> f64 {
    let edge = rng.random_range(0..2 * intervals.len());
    let at = intervals[edge / 2][edge % 2];
    at + rng.random_range(-ADJACENT_DISTANCE..=ADJACENT_DISTANCE)
}

/// GP task with context confined to `intervals` and targets next to their edges.
pub fn compacted_context_task(
    spec: KernelSpec,
    intervals: &[[f64; 2]],
    cfg: &TaskConfig,
    task_index: u64,
) -> Result<Task> {
    cfg.validate()?;
    validate_intervals(intervals)?;
    let mut sizes = rng::stream(cfg.base_seed, task_index, streams::TASK_SIZES);
    let n = draw_count(&mut sizes, cfg);
    let m = draw_count(&mut sizes, cfg);
    let mut pos = rng::stream(cfg.base_seed, task_index, streams::TASK_POSITIONS);
    let xc = (0..n).map(|_| draw_in_union(&mut pos, intervals)).collect();
    let xt = (0..m).map(|_| draw_near_edge(&mut pos, intervals)).collect();
    gp_task(spec, xc, xt, cfg, task_index)
}

/// One household's consumption: days since the first reading, kWh per half hour.
#[derive(Clone, Debug, PartialEq)]
pub struct SmartMeterSeries {
    pub timestamps: Vec<f64>,
    pub readings: Vec<f64>,
}

impl SmartMeterSeries {
    /// Build from `(day, reading)` rows in any order; duplicate days are rejected.
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_rows(rows, 1.0)
    }

    /// `rows` carry timestamps in `units_per_day` units; offsets from the first
    /// reading are taken before dividing so whole half-hours stay exact.
    fn from_rows(mut rows: Vec<(f64, f64)>, units_per_day: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyData("no readings".into()));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Degenerate(format!(
                "duplicate timestamp at day {}",
                w[0].0 / units_per_day
            )));
        }
        let t0 = rows[0].0;
        Ok(SmartMeterSeries {
            timestamps: rows.iter().map(|r| (r.0 - t0) / units_per_day).collect(),
            readings: rows.iter().map(|r| r.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn span_days(&self) -> f64 {
        self.timestamps.last().copied().unwrap_or(0.0)
    }
}

fn parse_timestamp(s: &str) -> Option<f64> {
    let s = s.trim();
    let t = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f").ok()?;
    let t = t.and_utc();
    Some(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9)
}

/// Parse a `timestamp,energy_kwh_hh` file. `Null` readings are dropped.
pub fn read_smart_meter(reader: impl BufRead) -> Result<SmartMeterSeries> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?,
        None => return Err(Error::EmptyData("file has no header".into())),
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        columns.iter().position(|c| *c == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let (t_col, e_col) = (find("timestamp")?, find("energy_kwh_hh")?);
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let cell = |c: usize| {
            cells.get(c).copied().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected {} columns, found {}", columns.len(), cells.len()),
            })
        };
        let (ts, reading) = (cell(t_col)?, cell(e_col)?);
        let day = parse_timestamp(ts).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("bad timestamp {ts:?}"),
        })?;
        if reading.eq_ignore_ascii_case("null") {
            continue;
        }
        let value: f64 = reading.parse().ok().filter(|v: &f64| v.is_finite() && *v >= 0.0).ok_or_else(|| {
            Error::Parse {
                line: line_no,
                msg: format!("bad reading {reading:?}"),
            }
        })?;
        rows.push((day, value));
    }
    SmartMeterSeries::from_rows(rows, SECONDS_PER_DAY).map_err(|e| match e {
        Error::Degenerate(msg) => Error::Parse { line: 0, msg },
        other => other,
    })
}

pub fn load_smart_meter(path: &Path) -> Result<SmartMeterSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_smart_meter(std::io::BufReader::new(file))
}

/// Indices of readings inside `[start, start + width]`.
fn window(series: &SmartMeterSeries, start: f64, width: f64) -> std::ops::Range<usize> {
    let lo = series.timestamps.partition_point(|&t| t < start);
    let hi = series.timestamps.partition_point(|&t| t <= start + width);
    lo..hi
}

/// Pick a clip of `cfg.x_high - cfg.x_low` days holding at least `min_points`
/// readings accepted by `keep`, and map it onto the config's x range.
fn pick_clip(
    series: &SmartMeterSeries,
    cfg: &TaskConfig,
    task_index: u64,
    min_points: usize,
    keep: impl Fn(f64) -> bool,
) -> Result<(Vec<f64>, Vec<f64>, impl Rng)> {
    let width = cfg.x_high - cfg.x_low;
    if series.span_days() < width {
        return Err(Error::Degenerate(format!(
            "series spans {:.3} days, a {width}-day window is needed",
            series.span_days()
        )));
    }
    let mut rng = rng::stream(cfg.base_seed, task_index, streams::SMART_METER_CLIP);
    for _ in 0..MAX_CLIP_ATTEMPTS {
        let start = rng.random_range(0.0..=series.span_days() - width);
        let (xs, ys): (Vec<f64>, Vec<f64>) = window(series, start, width)
            .map(|i| (cfg.x_low + (series.timestamps[i] - start), series.readings[i]))
            .filter(|&(x, _)| keep(x))
            .unzip();
        if xs.len() >= min_points {
            return Ok((xs, ys, rng));
        }
    }
    Err(Error::Degenerate(format!(
        "no {width}-day window with {min_points} readings after {MAX_CLIP_ATTEMPTS} attempts"
    )))
}

fn subsample(rng: &mut impl Rng, xs: &[f64], ys: &[f64], n: usize, m: usize) -> Result<Task> {
    let picks = sample(rng, xs.len(), n + m).into_vec();
    let take = |ids: &[usize]| -> (Vec<f64>, Vec<f64>) { ids.iter().map(|&i| (xs[i], ys[i])).unzip() };
    let (xc, yc) = take(&picks[..n]);
    let (xt, yt) = take(&picks[n..]);
    Task::new(xc, yc, xt, yt)
}

/// Random clip of the series mapped onto `[cfg.x_low, cfg.x_high]` (one
/// unit per day), split into disjoint context and target subsets.
pub fn sample_smartmeter_task(series: &SmartMeterSeries, cfg: &TaskConfig, task_index: u64) -> Result<Task> {
    cfg.validate()?;
    let (xs, ys, mut rng) = pick_clip(series, cfg, task_index, MIN_WINDOW_POINTS, |_| true)?;
    let lo = cfg.n_points_low;
    let n = rng.random_range(lo..=cfg.n_points_high.min(xs.len() - lo).max(lo));
    let m = rng.random_range(lo..=cfg.n_points_high.min(xs.len() - n).max(lo));
    subsample(&mut rng, &xs, &ys, n, m)
}

/// Smart Meter task with context inside `intervals` (x units) and targets
/// within [`ADJACENT_DISTANCE`] of an interval edge.
pub fn compacted_smartmeter_task(
    series: &SmartMeterSeries,
    intervals: &[[f64; 2]],
    cfg: &TaskConfig,
    task_index: u64,
) -> Result<Task> {
    cfg.validate()?;
    validate_intervals(intervals)?;
    let near = |x: f64| edge_distance(x, intervals) <= ADJACENT_DISTANCE;
    let useful = |x: f64| in_intervals(x, intervals) || near(x);
    let (xs, ys, mut rng) = pick_clip(series, cfg, task_index, MIN_WINDOW_POINTS, useful)?;
    let (ctx, tgt): (Vec<usize>, Vec<usize>) = (0..xs.len()).partition(|&i| in_intervals(xs[i], intervals));
    if ctx.is_empty() || tgt.is_empty() {
        return Err(Error::Degenerate("clip has no context or no adjacent targets".into()));
    }
    let pick = |rng: &mut _, ids: &[usize], k: usize| -> Vec<usize> {
        sample(rng, ids.len(), k.min(ids.len())).into_iter().map(|j| ids[j]).collect()
    };
    let n = rng.random_range(cfg.n_points_low..=cfg.n_points_high);
    let m = rng.random_range(cfg.n_points_low..=cfg.n_points_high);
    let ci = pick(&mut rng, &ctx, n);
    let ti = pick(&mut rng, &tgt, m);
    Task::new(
        ci.iter().map(|&i| xs[i]).collect(),
        ci.iter().map(|&i| ys[i]).collect(),
        ti.iter().map(|&i| xs[i]).collect(),
        ti.iter().map(|&i| ys[i]).collect(),
    )
}

/// Write tasks as one JSON object per line.
pub fn write_task_archive(mut out: impl Write, tasks: &[Task]) -> std::io::Result<()> {
    for task in tasks {
        serde_json::to_writer(&mut out, task)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_task_archive(reader: impl BufRead) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let task: Task = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        task.validate()?;
        tasks.push(task);
    }
    Ok(tasks)
}
