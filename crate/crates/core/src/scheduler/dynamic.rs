use std::collections::VecDeque;

use rand::Rng;

use super::{CommitteeSizing, Seat, Waiting};
use crate::error::{Error, Result};
use crate::ledger::{BlockEntry, Ledger};
use crate::model::PeerId;
use crate::net::Round;
use crate::rng::SimRng;

/// Global phase of the Dynamic scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// No committee is running; formation is retried every round.
    Idle,
    /// Committees of the current stage are running.
    Consensus,
    /// All committees of the stage finished; their blocks are written at `at`.
    Recording { at: Round },
}

/// The first `win_size` distinct publishers, most recent stage first, block
/// id ascending within a stage and member id ascending within a block. An
/// empty ledger yields all `n` peers. Short windows are padded with peers
/// that never published, in id order.
pub fn selection_window(ledger: &Ledger, n: usize, win_size: usize) -> Vec<PeerId> {
    if ledger.is_empty() {
        return (0..n as u32).map(PeerId).collect();
    }
    let blocks = ledger.blocks();
    let mut seen = vec![false; n];
    let mut window = Vec::with_capacity(win_size);
    let mut end = blocks.len();
    // blocks are stored in stage order, so walk whole stages backwards
    'outer: while end > 1 {
        let stage = blocks[end - 1].stage;
        let mut start = end;
        while start > 1 && blocks[start - 1].stage == stage {
            start -= 1;
        }
        for b in &blocks[start..end] {
            for &p in &b.publishers {
                if window.len() == win_size {
                    break 'outer;
                }
                if !std::mem::replace(&mut seen[p.index()], true) {
                    window.push(p);
                }
            }
        }
        end = start;
    }
    for (i, s) in seen.iter().enumerate() {
        if window.len() == win_size {
            break;
        }
        if !s {
            window.push(PeerId(i as u32));
        }
    }
    window
}

/// Committees are drawn uniformly from the selection window, only at stage
/// boundaries. Every stage's blocks link to all blocks of the stage before.
#[derive(Debug)]
pub struct DynamicScheduler {
    n: usize,
    win_size: usize,
    sizing: CommitteeSizing,
    ledger: Ledger,
    window: Vec<PeerId>,
    rng: SimRng,
}

impl DynamicScheduler {
    pub fn new(n: usize, win_size: usize, sizing: CommitteeSizing, rng: SimRng) -> Result<Self> {
        if win_size > n {
            return Err(Error::config(format!("window of {win_size} exceeds the {n} peers in the network")));
        }
        let largest = sizing.max_size()?;
        if win_size < largest {
            return Err(Error::config(format!(
                "window of {win_size} peers cannot seat the largest committee of {largest}"
            )));
        }
        let ledger = Ledger::staged();
        let window = selection_window(&ledger, n, win_size);
        Ok(DynamicScheduler { n, win_size, sizing, ledger, window, rng })
    }

    pub fn window(&self) -> &[PeerId] {
        &self.window
    }

    pub fn win_size(&self) -> usize {
        self.win_size
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    /// Writes one recording stage and refreshes the window. Returns the
    /// stage number.
    pub fn record_stage(&mut self, entries: Vec<BlockEntry>) -> Result<u32> {
        let stage = self.ledger.open_stage()?;
        for e in entries {
            self.ledger.append_block(e)?;
        }
        self.ledger.close_stage()?;
        self.window = selection_window(&self.ledger, self.n, self.win_size);
        Ok(stage)
    }

    /// Seats queued transactions with committees sampled without
    /// replacement from the window, while the head still fits.
    pub fn form_committees(&mut self, queue: &mut VecDeque<Waiting>) -> Result<Vec<Seat>> {
        let mut pool = self.window.clone();
        let mut seats = Vec::new();
        while let Some(&head) = queue.front() {
            let size = self.sizing.size_for(head.level)?;
            if size > pool.len() {
                break;
            }
            queue.pop_front();
            // partial Fisher-Yates: the first `size` entries become the sample
            for i in 0..size {
                let j = self.rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            let mut members: Vec<PeerId> = pool.drain(..size).collect();
            members.sort_unstable();
            seats.push(Seat { txn: head.txn, level: head.level, members, groups: Vec::new() });
        }
        Ok(seats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SecurityLevel, SizingConfig, TxnId};
    use crate::rng::{stream, Stream};

    fn sched(n: usize, win: usize) -> DynamicScheduler {
        DynamicScheduler::new(n, win, CommitteeSizing::Fixed(64), stream(1, Stream::Selection)).unwrap()
    }

    fn wait(id: u32) -> Waiting {
        Waiting { txn: TxnId(id), level: SecurityLevel::new(1, 5).unwrap() }
    }

    fn entry(txn: u32, publishers: &[u32]) -> BlockEntry {
        BlockEntry {
            txn: TxnId(txn),
            level: 1,
            defeated: false,
            publishers: publishers.iter().map(|&p| PeerId(p)).collect(),
        }
    }

    #[test]
    fn one_committee_from_window() {
        let mut s = sched(1024, 512);
        s.record_stage(vec![entry(0, &(0..512).collect::<Vec<_>>())]).unwrap();
        let mut q = VecDeque::from([wait(1)]);
        let seats = s.form_committees(&mut q).unwrap();
        assert_eq!(seats.len(), 1);
        assert_eq!(seats[0].members.len(), 64);
        assert!(seats[0].members.iter().all(|p| p.0 < 512));
    }

    #[test]
    fn two_committees_exhaust_small_window() {
        let mut s = sched(1024, 128);
        s.record_stage(vec![entry(0, &(200..328).collect::<Vec<_>>())]).unwrap();
        let mut q = VecDeque::from([wait(1), wait(2), wait(3)]);
        let seats = s.form_committees(&mut q).unwrap();
        assert_eq!(seats.len(), 2);
        let mut all: Vec<PeerId> = seats.iter().flat_map(|s| s.members.clone()).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 128);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn bootstrap_window_is_every_peer() {
        let s = sched(1024, 128);
        assert_eq!(s.window().len(), 1024);
    }

    #[test]
    fn window_order_and_padding() {
        let mut l = Ledger::staged();
        l.open_stage().unwrap();
        l.append_block(entry(0, &[5, 6, 7])).unwrap();
        l.close_stage().unwrap();
        l.open_stage().unwrap();
        l.append_block(entry(1, &[9, 6])).unwrap();
        l.append_block(entry(2, &[1])).unwrap();
        l.close_stage().unwrap();
        let w: Vec<u32> = selection_window(&l, 12, 8).iter().map(|p| p.0).collect();
        assert_eq!(w, vec![9, 6, 1, 5, 7, 0, 2, 3]);
        let w: Vec<u32> = selection_window(&l, 12, 2).iter().map(|p| p.0).collect();
        assert_eq!(w, vec![9, 6]);
    }

    #[test]
    fn small_window_rejected() {
        let sizing = CommitteeSizing::Adaptive(SizingConfig::default());
        assert!(DynamicScheduler::new(1024, 512, sizing, stream(1, Stream::Selection)).is_err());
        assert!(DynamicScheduler::new(1024, 2048, CommitteeSizing::Fixed(64), stream(1, Stream::Selection)).is_err());
    }

    #[test]
    fn stages_chain_when_one_block_each() {
        let mut s = sched(256, 64);
        for t in 0..4 {
            s.record_stage(vec![entry(t, &[t])]).unwrap();
        }
        assert_eq!(s.ledger().len(), 5);
        assert!(crate::ledger::validate_ledger(s.ledger()));
    }

    #[test]
    fn bootstrap_draws_are_uniform() {
        // 10^4 seeded first-stage committees of 64 from 256 peers: each
        // peer should appear with probability 1/4.
        let n = 256;
        let mut counts = vec![0u32; n];
        let trials = 10_000;
        for seed in 0..trials {
            let mut s =
                DynamicScheduler::new(n, n, CommitteeSizing::Fixed(64), stream(seed, Stream::Selection)).unwrap();
            let mut q = VecDeque::from([wait(0)]);
            for p in &s.form_committees(&mut q).unwrap()[0].members {
                counts[p.index()] += 1;
            }
        }
        let expect = trials as f64 * 64.0 / n as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 255 degrees of freedom; the 0.999 quantile is about 330
        assert!(chi2 < 330.0, "chi2 = {chi2}");
    }
}
