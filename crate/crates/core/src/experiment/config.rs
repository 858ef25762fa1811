use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::consensus::EngineKind;
use crate::error::{Error, Result};
use crate::events::EventLevel;
use crate::model::{SizingConfig, SizingRule};
use crate::scheduler::Layout;
use crate::sim::SimConfig;
use crate::workload::WorkloadConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Composite,
    Dynamic,
    /// Level-blind committees of one size, on each of `fixed_layouts`.
    Fixed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Composite => "composite",
            Mode::Dynamic => "dynamic",
            Mode::Fixed => "fixed",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composite" => Ok(Mode::Composite),
            "dynamic" => Ok(Mode::Dynamic),
            "fixed" => Ok(Mode::Fixed),
            other => Err(Error::config(format!("unknown mode `{other}` (expected composite, dynamic or fixed)"))),
        }
    }
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SweepParam {
    MaxDelay,
    ByzFraction,
    CommitteeSize,
    GenPeriod,
    WinSize,
    RecordingRounds,
    ViewChangeTimeout,
    ShufflePeriod,
    N,
    Gsize,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::MaxDelay => "maxDelay",
            SweepParam::ByzFraction => "byzFraction",
            SweepParam::CommitteeSize => "committeeSize",
            SweepParam::GenPeriod => "genPeriod",
            SweepParam::WinSize => "winSize",
            SweepParam::RecordingRounds => "recordingRounds",
            SweepParam::ViewChangeTimeout => "viewChangeTimeout",
            SweepParam::ShufflePeriod => "shufflePeriod",
            SweepParam::N => "n",
            SweepParam::Gsize => "gsize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizingKind {
    #[default]
    Exponential,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(alias = "mode", deserialize_with = "one_or_many")]
    pub modes: Vec<Mode>,
    #[serde(alias = "engine", deserialize_with = "one_or_many")]
    pub engines: Vec<EngineKind>,
    /// Layouts a `fixed` mode runs on.
    #[serde(deserialize_with = "one_or_many")]
    pub fixed_layouts: Vec<Layout>,
    /// Committee size for `fixed` mode when it is not swept.
    pub committee_size: Option<usize>,
    pub n: usize,
    pub rounds: u32,
    pub runs: u32,
    pub max_delay: u32,
    pub byz_fraction: f64,
    pub gen_period: u32,
    pub levels: u8,
    pub level_prob: f64,
    pub base_committee_size: usize,
    pub sizing: SizingKind,
    pub sec_mult: usize,
    pub gsize: usize,
    /// Defaults to `n`.
    pub win_size: Option<usize>,
    pub view_change_timeout: Option<u32>,
    pub recording_rounds: u32,
    pub shuffle_period: u32,
    pub seed: Option<u64>,
    pub sweep: Option<Sweep>,
    pub timeline: bool,
    pub timeline_window: u32,
    pub event_log: EventLevel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "custom".into(),
            modes: vec![Mode::Composite, Mode::Dynamic],
            engines: EngineKind::ALL.to_vec(),
            fixed_layouts: vec![Layout::Composite, Layout::Dynamic],
            committee_size: None,
            n: 1024,
            rounds: 1000,
            runs: 10,
            max_delay: 1,
            byz_fraction: 0.1,
            gen_period: 2,
            levels: 5,
            level_prob: 0.5,
            base_committee_size: 64,
            sizing: SizingKind::Exponential,
            sec_mult: 64,
            gsize: 64,
            win_size: None,
            view_change_timeout: None,
            recording_rounds: 1,
            shuffle_period: 10,
            seed: None,
            sweep: None,
            timeline: false,
            timeline_window: 200,
            event_log: EventLevel::Off,
        }
    }
}

/// One simulation's place in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub mode: Mode,
    pub sweep_index: usize,
    pub sweep_value: Option<f64>,
    pub run_index: u32,
    pub sim: SimConfig,
}

fn integral(param: SweepParam, v: f64) -> Result<u64> {
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::config(format!("sweep value {v} for {} must be a non-negative integer", param.as_str())));
    }
    Ok(v as u64)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Sweep values, or a single unnamed point.
    pub fn points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }

    /// `(layout, fixed size)` pairs a mode expands into at a sweep point.
    fn layouts(&self, mode: Mode) -> Vec<Layout> {
        match mode {
            Mode::Composite => vec![Layout::Composite],
            Mode::Dynamic => vec![Layout::Dynamic],
            Mode::Fixed => self.fixed_layouts.clone(),
        }
    }

    fn base_sim(&self) -> SimConfig {
        let rule = match self.sizing {
            SizingKind::Exponential => SizingRule::Exponential,
            SizingKind::Linear => SizingRule::Linear { sec_mult: self.sec_mult },
        };
        SimConfig {
            layout: Layout::Composite,
            engine: EngineKind::Pbft,
            fixed_size: None,
            n: self.n,
            rounds: self.rounds,
            max_delay: self.max_delay,
            byz_fraction: self.byz_fraction,
            workload: WorkloadConfig { gen_period: self.gen_period, levels: self.levels, level_prob: self.level_prob },
            sizing: SizingConfig { base: self.base_committee_size, levels: self.levels, rule },
            gsize: self.gsize,
            win_size: self.win_size.unwrap_or(self.n),
            view_change_timeout: self.view_change_timeout,
            recording_rounds: self.recording_rounds,
            shuffle_period: self.shuffle_period,
            seed: 0,
            event_level: self.event_log,
        }
    }

    fn apply(&self, sim: &mut SimConfig, param: SweepParam, v: f64) -> Result<()> {
        match param {
            SweepParam::ByzFraction => sim.byz_fraction = v,
            SweepParam::MaxDelay => sim.max_delay = integral(param, v)? as u32,
            SweepParam::CommitteeSize => sim.fixed_size = Some(integral(param, v)? as usize),
            SweepParam::GenPeriod => sim.workload.gen_period = integral(param, v)? as u32,
            SweepParam::WinSize => sim.win_size = integral(param, v)? as usize,
            SweepParam::RecordingRounds => sim.recording_rounds = integral(param, v)? as u32,
            SweepParam::ViewChangeTimeout => sim.view_change_timeout = Some(integral(param, v)? as u32),
            SweepParam::ShufflePeriod => sim.shuffle_period = integral(param, v)? as u32,
            SweepParam::N => {
                sim.n = integral(param, v)? as usize;
                if self.win_size.is_none() {
                    sim.win_size = sim.n;
                }
            }
            SweepParam::Gsize => sim.gsize = integral(param, v)? as usize,
        }
        Ok(())
    }

    /// Expands the experiment into simulations, ordered by mode, engine,
    /// sweep point and run. Every simulation is validated before any runs.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        self.validate()?;
        let mut jobs = Vec::new();
        for &mode in &self.modes {
            for layout in self.layouts(mode) {
                for &engine in &self.engines {
                    for (sweep_index, point) in self.points().into_iter().enumerate() {
                        let mut sim = self.base_sim();
                        sim.layout = layout;
                        sim.engine = engine;
                        if mode == Mode::Fixed {
                            sim.fixed_size = self.committee_size;
                        }
                        if let (Some(s), Some(v)) = (&self.sweep, point) {
                            self.apply(&mut sim, s.parameter, v)?;
                        }
                        if mode == Mode::Fixed && sim.fixed_size.is_none() {
                            return Err(Error::config("fixed mode needs committeeSize or a committeeSize sweep"));
                        }
                        if mode != Mode::Fixed {
                            sim.fixed_size = None;
                        }
                        sim.validate()?;
                        for run_index in 0..self.runs {
                            let mut sim = sim.clone();
                            sim.seed = crate::rng::mix_seed(self.base_seed(), sweep_index as u64, u64::from(run_index));
                            jobs.push(Job { mode, sweep_index, sweep_value: point, run_index, sim });
                        }
                    }
                }
            }
        }
        Ok(jobs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() || self.engines.is_empty() {
            return Err(Error::config("at least one mode and one engine are required"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.modes.contains(&Mode::Fixed) && self.fixed_layouts.is_empty() {
            return Err(Error::config("fixed mode needs at least one layout"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::config(format!("sweep over {} has no values", s.parameter.as_str())));
            }
            if s.parameter == SweepParam::CommitteeSize && self.modes.iter().any(|m| *m != Mode::Fixed) {
                return Err(Error::config("a committeeSize sweep only applies to fixed mode"));
            }
        }
        if self.timeline && self.timeline_window == 0 {
            return Err(Error::config("timeline window must be positive"));
        }
        Ok(())
    }
}
