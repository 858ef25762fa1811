use std::collections::VecDeque;

use super::{CommitteeSizing, Seat, Waiting};
use crate::error::{Error, Result};
use crate::ledger::{BlockEntry, Ledger};
use crate::model::{GroupId, PeerId, SecurityLevel};

/// Peers are split into fixed recording groups of `gsize` consecutive ids.
/// A committee is the union of whole idle groups, taken from the front of
/// the free list; finished groups rejoin at the back. Transactions are
/// seated strictly in arrival order.
#[derive(Debug, Clone)]
pub struct CompositeScheduler {
    gsize: usize,
    groups: Vec<Vec<PeerId>>,
    ledgers: Vec<Ledger>,
    free: VecDeque<GroupId>,
    sizing: CommitteeSizing,
}

impl CompositeScheduler {
    pub fn new(n: usize, gsize: usize, sizing: CommitteeSizing) -> Result<Self> {
        if gsize == 0 || n == 0 || !n.is_multiple_of(gsize) {
            return Err(Error::config(format!("{n} peers cannot be split into groups of {gsize}")));
        }
        for size in sizing.sizes()? {
            if size % gsize != 0 {
                return Err(Error::config(format!("committee size {size} is not a multiple of group size {gsize}")));
            }
            if size > n {
                return Err(Error::config(format!("committee size {size} exceeds the {n} peers in the network")));
            }
        }
        let count = n / gsize;
        let groups = (0..count).map(|g| (g * gsize..(g + 1) * gsize).map(|i| PeerId(i as u32)).collect()).collect();
        Ok(CompositeScheduler {
            gsize,
            groups,
            ledgers: (0..count).map(|_| Ledger::chain()).collect(),
            free: (0..count as u32).map(GroupId).collect(),
            sizing,
        })
    }

    pub fn group_size(&self) -> usize {
        self.gsize
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn free_groups(&self) -> usize {
        self.free.len()
    }

    pub fn free_list(&self) -> impl Iterator<Item = GroupId> + '_ {
        self.free.iter().copied()
    }

    pub fn members(&self, g: GroupId) -> &[PeerId] {
        &self.groups[g.0 as usize]
    }

    pub fn ledgers(&self) -> &[Ledger] {
        &self.ledgers
    }

    pub fn into_ledgers(self) -> Vec<Ledger> {
        self.ledgers
    }

    pub fn required_groups(&self, level: SecurityLevel) -> Result<usize> {
        Ok(self.sizing.size_for(level)? / self.gsize)
    }

    /// Seats queued transactions while the head fits into the free groups.
    pub fn evaluate(&mut self, queue: &mut VecDeque<Waiting>) -> Result<Vec<Seat>> {
        let mut seats = Vec::new();
        while let Some(&head) = queue.front() {
            let need = self.required_groups(head.level)?;
            if need > self.free.len() {
                break;
            }
            queue.pop_front();
            let groups: Vec<GroupId> = self.free.drain(..need).collect();
            let mut members: Vec<PeerId> = groups.iter().flat_map(|g| self.members(*g).iter().copied()).collect();
            members.sort_unstable();
            seats.push(Seat { txn: head.txn, level: head.level, members, groups });
        }
        Ok(seats)
    }

    /// Returns a finished committee's groups to the back of the free list.
    pub fn on_done(&mut self, groups: &[GroupId]) {
        debug_assert!(groups.iter().all(|g| !self.free.contains(g)));
        self.free.extend(groups.iter().copied());
    }

    /// Writes the block into the ledger of every group that served.
    pub fn record(&mut self, groups: &[GroupId], entry: &BlockEntry) -> Result<()> {
        for g in groups {
            let own: Vec<PeerId> = self.members(*g).to_vec();
            self.ledgers[g.0 as usize].append_block(BlockEntry { publishers: own, ..entry.clone() })?;
        }
        Ok(())
    }
}
