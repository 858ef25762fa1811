use super::config::{ExperimentConfig, Mode, Sweep, SweepParam};
use crate::error::{Error, Result};

pub const PRESETS: [&str; 7] =
    ["fixed", "throughput-delay", "throughput-fraction", "wait-delay", "wait-fraction", "defeated", "timeline"];

fn sweep(parameter: SweepParam, values: &[f64]) -> Option<Sweep> {
    Some(Sweep { parameter, values: values.to_vec() })
}

/// Built-in experiment families. Each covers both scheduling modes and all
/// three engines.
pub fn builtin_experiment(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig { name: name.to_string(), ..ExperimentConfig::default() };
    let cfg = match name {
        "fixed" => ExperimentConfig {
            modes: vec![Mode::Fixed],
            sweep: sweep(SweepParam::CommitteeSize, &[64.0, 128.0, 256.0, 512.0, 1024.0]),
            ..base
        },
        "throughput-delay" | "wait-delay" => {
            ExperimentConfig { sweep: sweep(SweepParam::MaxDelay, &[1.0, 2.0, 4.0, 8.0]), ..base }
        }
        "throughput-fraction" | "defeated" => {
            ExperimentConfig { sweep: sweep(SweepParam::ByzFraction, &[0.0, 0.1, 0.2, 0.3, 0.4]), ..base }
        }
        "wait-fraction" => {
            ExperimentConfig { sweep: sweep(SweepParam::ByzFraction, &[0.0, 0.1, 0.2, 0.3, 0.4, 0.45]), ..base }
        }
        "timeline" => ExperimentConfig { timeline: true, ..base },
        other => {
            return Err(Error::UnknownPreset { name: other.to_string(), available: PRESETS.join(", ") });
        }
    };
    Ok(cfg)
}
