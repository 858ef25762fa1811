use rand_distr::{Binomial, Distribution};

use super::{EngineCtx, EngineEvent, EngineStats, Protocol};
use crate::model::Committee;
use crate::net::{MsgKind, Round};
use crate::rng::SimRng;

/// Rounds a member needs to mine: `max(min_rounds, Binomial(trials, p))`.
/// The defaults give mode 5 and variance 2.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningModel {
    pub trials: u64,
    pub success_prob: f64,
    pub min_rounds: u32,
}

impl Default for MiningModel {
    fn default() -> Self {
        MiningModel { trials: 10, success_prob: 0.5, min_rounds: 1 }
    }
}

impl MiningModel {
    pub fn sample(&self, rng: &mut SimRng) -> u32 {
        let dist = Binomial::new(self.trials, self.success_prob).expect("valid binomial parameters");
        (dist.sample(rng) as u32).max(self.min_rounds)
    }
}

/// Every member mines with its own sampled duration; the first to finish
/// (smallest id on ties) wins. A Byzantine winner in a reliable committee
/// has its block discarded and everyone redraws.
#[derive(Debug, Clone)]
pub struct PowState {
    start: Round,
    model: MiningModel,
    durations: Vec<u32>,
    stage_start: Round,
    finish: Option<Round>,
    first_confirm: Option<Round>,
    restarts: u32,
    done: bool,
}

impl PowState {
    pub fn new(n: usize, start: Round, model: MiningModel) -> Self {
        PowState {
            start,
            model,
            durations: vec![0; n],
            stage_start: start,
            finish: None,
            first_confirm: None,
            restarts: 0,
            done: false,
        }
    }

    /// Durations drawn for the current mining stage.
    pub fn durations(&self) -> &[u32] {
        &self.durations
    }

    /// Rounds left for `slot` at round `now`.
    pub fn remaining(&self, slot: usize, now: Round) -> u32 {
        self.durations[slot].saturating_sub(now.0.saturating_sub(self.stage_start.0))
    }

    fn draw(&mut self, now: Round, rng: &mut SimRng) {
        for d in self.durations.iter_mut() {
            *d = self.model.sample(rng);
        }
        self.stage_start = now;
        let min = *self.durations.iter().min().expect("non-empty committee");
        self.finish = Some(now.plus(min));
    }
}

impl Protocol for PowState {
    fn on_message(&mut self, _: &Committee, _: usize, _: usize, _: MsgKind, _: u32) {}

    fn on_round(&mut self, ctx: &mut EngineCtx<'_>) {
        let r = ctx.round;
        if self.done || r < self.start {
            return;
        }
        if r == self.start && self.finish.is_none() {
            ctx.events.push(EngineEvent::Started);
            self.draw(r, ctx.rng);
            return;
        }
        if self.finish != Some(r) {
            return;
        }
        let c = ctx.committee;
        let slot = (0..c.size()).find(|&s| self.remaining(s, r) == 0).expect("a miner finishes");
        let miner = c.members[slot];
        if c.byzantine[slot] && !c.defeated {
            self.restarts += 1;
            ctx.events.push(EngineEvent::Restart { miner });
            self.draw(r, ctx.rng);
            return;
        }
        self.first_confirm = Some(r);
        self.done = true;
        ctx.events.push(EngineEvent::Mined { miner });
        ctx.events.push(EngineEvent::Confirmed);
        ctx.events.push(EngineEvent::Completed { defeated: c.byzantine[slot] });
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn confirm_round(&self) -> Option<Round> {
        self.first_confirm
    }

    fn stats(&self) -> EngineStats {
        EngineStats { view_changes: 0, restarts: self.restarts }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::{committee, run};
    use super::super::{start_consensus, Engine, EngineCtx, EngineKind, EngineParams};
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn sample_mean_is_five() {
        // Sample-mean oracle; the clamped distribution's exact mean is
        // 5 + 1/1024.
        let m = MiningModel::default();
        let mut rng = stream(5, Stream::Mining);
        let n = 100_000;
        let mut sum = 0u64;
        for _ in 0..n {
            let d = m.sample(&mut rng);
            assert!((1..=10).contains(&d));
            sum += u64::from(d);
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 5.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn committee_of_64_draws_64_durations() {
        let c = committee(EngineKind::Pow, &[false; 64]);
        let mut e = start_consensus(&c, &EngineParams::new(1), Round(1)).unwrap();
        let mut rng = stream(1, Stream::Mining);
        let (mut outbox, mut events) = (Vec::new(), Vec::new());
        let mut ctx =
            EngineCtx { round: Round(1), committee: &c, outbox: &mut outbox, events: &mut events, rng: &mut rng };
        e.on_round(&mut ctx);
        let Engine::Pow(s) = &e else { unreachable!() };
        assert_eq!(s.durations().len(), 64);
        assert!(s.durations().iter().all(|&d| d >= 1));
        assert!(outbox.is_empty());
    }

    #[test]
    fn honest_committee_done_after_min_duration() {
        let c = committee(EngineKind::Pow, &[false; 16]);
        let mut rng = stream(3, Stream::Mining);
        // replay the same draws the engine will make
        let m = MiningModel::default();
        let min = (0..16).map(|_| m.sample(&mut rng)).min().unwrap();
        let t = run(&c, EngineParams::new(1), 3, 0, 100);
        assert_eq!(t.confirm, Some(Round(1 + min)));
        assert_eq!(t.stats.restarts, 0);
    }

    #[test]
    fn restarts_sum_stage_minima() {
        // Replay oracle: latency equals the sum of each stage's minimum, and
        // the restart count equals the Byzantine-first mining events.
        let byz: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
        let c = committee(EngineKind::Pow, &byz);
        assert!(!c.defeated);
        let m = MiningModel::default();
        let mut saw_restart = false;
        for seed in 0..200 {
            let t = run(&c, EngineParams::new(1), seed, 0, 10_000);
            let mut rng = stream(seed, Stream::Mining);
            let mut total = 0;
            let mut restarts = 0;
            loop {
                let draws: Vec<u32> = (0..12).map(|_| m.sample(&mut rng)).collect();
                let min = *draws.iter().min().unwrap();
                total += min;
                let winner = draws.iter().position(|&d| d == min).unwrap();
                if !byz[winner] {
                    break;
                }
                restarts += 1;
            }
            saw_restart |= restarts >= 2;
            assert_eq!(t.confirm, Some(Round(1 + total)));
            assert_eq!(t.stats.restarts, restarts);
            let logged = t.events.iter().filter(|(_, e)| matches!(e, EngineEvent::Restart { .. })).count();
            assert_eq!(logged as u32, restarts);
        }
        assert!(saw_restart);
    }

    #[test]
    fn honest_miner_in_defeated_committee_counts_reliable() {
        let byz = [false, true, true, true];
        let c = committee(EngineKind::Pow, &byz);
        assert!(c.defeated);
        let mut reliable = 0;
        let mut defeated = 0;
        for seed in 0..300 {
            let t = run(&c, EngineParams::new(1), seed, 0, 100);
            assert_eq!(t.stats.restarts, 0);
            for (_, e) in &t.events {
                match e {
                    EngineEvent::Completed { defeated: false } => reliable += 1,
                    EngineEvent::Completed { defeated: true } => defeated += 1,
                    _ => {}
                }
            }
        }
        assert!(reliable > 0 && defeated > 0);
        assert_eq!(reliable + defeated, 300);
    }
}
