use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Job};
use crate::error::Result;
use crate::events::EventLevel;
use crate::metrics::{self, TimelinePoint};
use crate::sim::{run_simulation, SimOutput};

/// Bumped whenever a column is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;

/// Rounds at the end of a run over which the steady-state throughput is
/// averaged.
pub const STEADY_ROUNDS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Run,
    Mean,
    Std,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultRow {
    pub schema_version: u32,
    pub row_kind: RowKind,
    pub mode: String,
    pub engine: String,
    pub n: usize,
    pub max_delay: u32,
    pub byz_fraction: f64,
    pub committee_size_or_adaptive: String,
    pub sweep_parameter: Option<String>,
    pub sweep_value: Option<f64>,
    pub run_index: Option<u32>,
    pub seed: Option<u64>,
    pub runs: u32,
    pub throughput: Option<f64>,
    pub avg_wait: Option<f64>,
    pub defeated_ratio: Option<f64>,
    #[serde(rename = "defeatedRatioL1")]
    pub defeated_ratio_l1: Option<f64>,
    #[serde(rename = "defeatedRatioL2")]
    pub defeated_ratio_l2: Option<f64>,
    #[serde(rename = "defeatedRatioL3")]
    pub defeated_ratio_l3: Option<f64>,
    #[serde(rename = "defeatedRatioL4")]
    pub defeated_ratio_l4: Option<f64>,
    #[serde(rename = "defeatedRatioL5")]
    pub defeated_ratio_l5: Option<f64>,
    pub backlog: Option<f64>,
    pub steady_throughput: Option<f64>,
    pub committees: Option<f64>,
    pub view_changes: Option<f64>,
    pub restarts: Option<f64>,
}

impl ResultRow {
    fn metrics(&self) -> [Option<f64>; 13] {
        [
            self.throughput,
            self.avg_wait,
            self.defeated_ratio,
            self.defeated_ratio_l1,
            self.defeated_ratio_l2,
            self.defeated_ratio_l3,
            self.defeated_ratio_l4,
            self.defeated_ratio_l5,
            self.backlog,
            self.steady_throughput,
            self.committees,
            self.view_changes,
            self.restarts,
        ]
    }

    fn with_metrics(&self, kind: RowKind, runs: u32, m: [Option<f64>; 13]) -> ResultRow {
        ResultRow {
            row_kind: kind,
            run_index: None,
            seed: None,
            runs,
            throughput: m[0],
            avg_wait: m[1],
            defeated_ratio: m[2],
            defeated_ratio_l1: m[3],
            defeated_ratio_l2: m[4],
            defeated_ratio_l3: m[5],
            defeated_ratio_l4: m[6],
            defeated_ratio_l5: m[7],
            backlog: m[8],
            steady_throughput: m[9],
            committees: m[10],
            view_changes: m[11],
            restarts: m[12],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TimelineRow {
    pub schema_version: u32,
    pub mode: String,
    pub engine: String,
    pub committee_size_or_adaptive: String,
    pub sweep_value: Option<f64>,
    pub round: u32,
    pub rolling_throughput: f64,
    pub rolling_wait: Option<f64>,
}

/// One finished simulation.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub job: Job,
    pub row: ResultRow,
    pub timeline: Vec<TimelinePoint>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<SimResult>,
    /// Run rows, each group followed by its mean and std rows.
    pub rows: Vec<ResultRow>,
    pub timeline: Vec<TimelineRow>,
}

fn summarize(cfg: &ExperimentConfig, job: &Job, out: &SimOutput) -> (ResultRow, Vec<TimelinePoint>) {
    let m = &out.metrics;
    let sim = &job.sim;
    let timeline = metrics::rolling_timeline(m, cfg.timeline_window);
    let steady = (!timeline.is_empty()).then(|| {
        let tail = &timeline[timeline.len().saturating_sub(STEADY_ROUNDS)..];
        tail.iter().map(|p| p.rolling_throughput).sum::<f64>() / tail.len() as f64
    });
    let levels = metrics::defeated_ratio_by_level(m, 5);
    let done = m.committees.iter().filter(|c| c.done_round.is_some());
    let (mut vc, mut rs, mut count) = (0u64, 0u64, 0u64);
    for c in done {
        vc += u64::from(c.view_changes);
        rs += u64::from(c.restarts);
        count += 1;
    }
    let row = ResultRow {
        schema_version: SCHEMA_VERSION,
        row_kind: RowKind::Run,
        mode: sim.layout.as_str().to_string(),
        engine: sim.engine.as_str().to_string(),
        n: sim.n,
        max_delay: sim.max_delay,
        byz_fraction: sim.byz_fraction,
        committee_size_or_adaptive: sim.fixed_size.map_or_else(|| "adaptive".to_string(), |s| s.to_string()),
        sweep_parameter: cfg.sweep.as_ref().map(|s| s.parameter.as_str().to_string()),
        sweep_value: job.sweep_value,
        run_index: Some(job.run_index),
        seed: Some(sim.seed),
        runs: 1,
        throughput: metrics::throughput(m, m.rounds).ok(),
        avg_wait: metrics::avg_waiting_time(m).ok(),
        defeated_ratio: metrics::defeated_ratio(m).ok(),
        defeated_ratio_l1: levels[0],
        defeated_ratio_l2: levels[1],
        defeated_ratio_l3: levels[2],
        defeated_ratio_l4: levels[3],
        defeated_ratio_l5: levels[4],
        backlog: Some(m.backlog() as f64),
        steady_throughput: steady,
        committees: Some(count as f64),
        view_changes: Some(vc as f64),
        restarts: Some(rs as f64),
    };
    (row, timeline)
}

/// Mean and sample standard deviation over the defined values.
pub fn mean_std(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return (None, None);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let std = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt());
    (Some(mean), std)
}

fn aggregate(group: &[SimResult]) -> [ResultRow; 2] {
    let first = &group[0].row;
    let mut means = [None; 13];
    let mut stds = [None; 13];
    for (i, (m, s)) in means.iter_mut().zip(stds.iter_mut()).enumerate() {
        (*m, *s) = mean_std(group.iter().map(|r| r.row.metrics()[i]));
    }
    let runs = group.len() as u32;
    [first.with_metrics(RowKind::Mean, runs, means), first.with_metrics(RowKind::Std, runs, stds)]
}

fn timeline_rows(group: &[SimResult]) -> Vec<TimelineRow> {
    let first = &group[0].row;
    let len = group.iter().map(|r| r.timeline.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let (tp, _) = mean_std(group.iter().map(|r| Some(r.timeline[i].rolling_throughput)));
            let (wait, _) = mean_std(group.iter().map(|r| r.timeline[i].rolling_wait));
            TimelineRow {
                schema_version: SCHEMA_VERSION,
                mode: first.mode.clone(),
                engine: first.engine.clone(),
                committee_size_or_adaptive: first.committee_size_or_adaptive.clone(),
                sweep_value: first.sweep_value,
                round: group[0].timeline[i].round,
                rolling_throughput: tp.unwrap_or(0.0),
                rolling_wait: wait,
            }
        })
        .collect()
}

/// File name of one simulation's event log.
pub fn event_log_name(job: &Job) -> String {
    let size = job.sim.fixed_size.map_or_else(|| "adaptive".to_string(), |s| s.to_string());
    format!(
        "{}_{}_{}_p{}_r{}.ndjson",
        job.sim.layout.as_str(),
        job.sim.engine.as_str(),
        size,
        job.sweep_index,
        job.run_index
    )
}

/// Runs every simulation of the experiment (in parallel when threads are
/// available) and aggregates the results. Event logs, when enabled in the
/// config, are written to `events_dir` as one NDJSON file per simulation.
pub fn run_experiment(cfg: &ExperimentConfig, events_dir: Option<&Path>) -> Result<ExperimentResult> {
    let jobs = cfg.jobs()?;
    if let Some(dir) = events_dir {
        std::fs::create_dir_all(dir)?;
    }
    let runs: Vec<SimResult> = jobs
        .into_par_iter()
        .map(|job| -> Result<SimResult> {
            let out = run_simulation(job.sim.clone())?;
            if let (Some(dir), true) = (events_dir, cfg.event_log != EventLevel::Off) {
                let file = std::fs::File::create(dir.join(event_log_name(&job)))?;
                out.events.write_ndjson(std::io::BufWriter::new(file))?;
            }
            let (row, timeline) = summarize(cfg, &job, &out);
            Ok(SimResult { job, row, timeline })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(runs.len() + runs.len() / cfg.runs.max(1) as usize * 2);
    let mut timeline = Vec::new();
    for group in runs.chunks(cfg.runs as usize) {
        rows.extend(group.iter().map(|r| r.row.clone()));
        rows.extend(aggregate(group));
        if cfg.timeline {
            timeline.extend(timeline_rows(group));
        }
    }
    Ok(ExperimentResult { config: cfg.clone(), runs, rows, timeline })
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_timeline_csv<W: Write>(rows: &[TimelineRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
