//! Transaction stream: one transaction every `gen_period` rounds, from a
//! uniformly chosen peer, with a geometric security level truncated at the
//! top level.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PeerId, SecurityLevel};
use crate::net::Round;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub gen_period: u32,
    pub levels: u8,
    pub level_prob: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig { gen_period: 2, levels: 5, level_prob: 0.5 }
    }
}

/// `P(level = k)`: `(1 - q)^(k-1) * q` below the top level, the remaining
/// mass at the top. For `q = 0.5` this is `0.5^k` and `0.5^(L-1)`.
pub fn level_probabilities(levels: u8, q: f64) -> Vec<f64> {
    let mut probs = Vec::with_capacity(levels as usize);
    let mut rest = 1.0;
    for _ in 1..levels {
        let p = rest * q;
        probs.push(p);
        rest -= p;
    }
    probs.push(rest);
    probs
}

#[derive(Debug)]
pub struct Workload {
    config: WorkloadConfig,
    cumulative: Vec<f64>,
    rng: SimRng,
}

impl Workload {
    pub fn new(config: WorkloadConfig, rng: SimRng) -> Result<Self> {
        if config.gen_period < 1 {
            return Err(Error::config("generation period must be at least one round"));
        }
        if config.levels < 1 {
            return Err(Error::config("at least one security level is required"));
        }
        if !(config.level_prob > 0.0 && config.level_prob <= 1.0) {
            return Err(Error::config("level probability must be in (0, 1]"));
        }
        let mut acc = 0.0;
        let cumulative = level_probabilities(config.levels, config.level_prob)
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Workload { config, cumulative, rng })
    }

    pub fn config(&self) -> &WorkloadConfig {
        &self.config
    }

    pub fn sample_level(&mut self) -> SecurityLevel {
        let u: f64 = self.rng.random();
        let idx = self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1);
        SecurityLevel::new(idx as u8 + 1, self.config.levels).expect("index within levels")
    }

    /// A new transaction's level and generating peer, on generation rounds.
    pub fn generate(&mut self, round: Round, n_peers: usize) -> Option<(SecurityLevel, PeerId)> {
        if !round.0.is_multiple_of(self.config.gen_period) {
            return None;
        }
        let generator = PeerId(self.rng.random_range(0..n_peers as u32));
        let level = self.sample_level();
        Some((level, generator))
    }
}
