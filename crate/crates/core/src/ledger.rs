//! Append-only ledgers.
//!
//! A [`LedgerKind::Chain`] is one group's linear blockchain. A
//! [`LedgerKind::Staged`] ledger is the single shared DAG built in recording
//! stages: every block written in stage `k` links to every block written in
//! stage `k - 1`, which makes the ledger series-parallel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Committee, PeerId, TxnId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerKind {
    Chain,
    Staged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub block_id: BlockId,
    pub txn_id: Option<TxnId>,
    pub level: Option<u8>,
    pub parents: Vec<BlockId>,
    pub stage: u32,
    pub defeated: bool,
    #[serde(skip)]
    pub digest: u64,
    /// Members of the committee that wrote the block, ascending.
    #[serde(skip)]
    pub publishers: Vec<PeerId>,
}

/// What a committee hands to the ledger.
#[derive(Debug, Clone)]
pub struct BlockEntry {
    pub txn: TxnId,
    pub level: u8,
    pub defeated: bool,
    pub publishers: Vec<PeerId>,
}

impl BlockEntry {
    pub fn from_committee(committee: &Committee, defeated: bool) -> Self {
        BlockEntry { txn: committee.txn, level: committee.level.get(), defeated, publishers: committee.members.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    kind: LedgerKind,
    blocks: Vec<Block>,
    /// Staged only: blocks of the last closed stage.
    frontier: Vec<BlockId>,
    open: Option<u32>,
}

fn digest(txn: Option<TxnId>, parents: &[BlockId]) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: u32| {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(txn.map_or(u32::MAX, |t| t.0));
    for p in parents {
        feed(p.0);
    }
    h
}

impl Ledger {
    pub fn new(kind: LedgerKind) -> Self {
        let genesis = Block {
            block_id: BlockId(0),
            txn_id: None,
            level: None,
            parents: Vec::new(),
            stage: 0,
            defeated: false,
            digest: digest(None, &[]),
            publishers: Vec::new(),
        };
        Ledger { kind, blocks: vec![genesis], frontier: vec![BlockId(0)], open: None }
    }

    pub fn chain() -> Self {
        Self::new(LedgerKind::Chain)
    }

    pub fn staged() -> Self {
        Self::new(LedgerKind::Staged)
    }

    pub fn kind(&self) -> LedgerKind {
        self.kind
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Current frontier: the chain head, or the blocks of the latest stage.
    pub fn heads(&self) -> Vec<BlockId> {
        match self.kind {
            LedgerKind::Chain => vec![self.blocks.last().expect("genesis").block_id],
            LedgerKind::Staged => {
                let last = self.blocks.last().expect("genesis").stage;
                self.blocks.iter().filter(|b| b.stage == last).map(|b| b.block_id).collect()
            }
        }
    }

    /// Number of the last closed recording stage (0 = genesis only).
    pub fn last_stage(&self) -> u32 {
        self.blocks.last().expect("genesis").stage
    }

    /// Opens the next recording stage of a staged ledger.
    pub fn open_stage(&mut self) -> Result<u32> {
        if self.kind != LedgerKind::Staged || self.open.is_some() {
            return Err(Error::PhaseViolation);
        }
        let next = self.last_stage() + 1;
        self.open = Some(next);
        Ok(next)
    }

    pub fn close_stage(&mut self) -> Result<()> {
        let stage = self.open.take().ok_or(Error::PhaseViolation)?;
        let written: Vec<BlockId> =
            self.blocks.iter().rev().take_while(|b| b.stage == stage).map(|b| b.block_id).collect();
        if !written.is_empty() {
            self.frontier = written.into_iter().rev().collect();
        }
        Ok(())
    }

    pub fn append_block(&mut self, entry: BlockEntry) -> Result<BlockId> {
        let (parents, stage) = match self.kind {
            LedgerKind::Chain => {
                let head = self.blocks.last().expect("genesis");
                (vec![head.block_id], head.stage + 1)
            }
            LedgerKind::Staged => {
                let stage = self.open.ok_or(Error::PhaseViolation)?;
                (self.frontier.clone(), stage)
            }
        };
        let id = BlockId(self.blocks.len() as u32);
        self.blocks.push(Block {
            block_id: id,
            txn_id: Some(entry.txn),
            level: Some(entry.level),
            digest: digest(Some(entry.txn), &parents),
            parents,
            stage,
            defeated: entry.defeated,
            publishers: entry.publishers,
        });
        Ok(id)
    }

    pub fn contains_txn(&self, txn: TxnId) -> bool {
        self.blocks.iter().any(|b| b.txn_id == Some(txn))
    }

    /// JSON array of `{blockId, txnId, level, parents, stage, defeated}`.
    pub fn export_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.blocks)?)
    }
}

/// Checks the structural invariants of a ledger: a single genesis, acyclic
/// parent links with intact digests, and the kind-specific linking rule.
pub fn validate_ledger(ledger: &Ledger) -> bool {
    let blocks = ledger.blocks();
    let Some(genesis) = blocks.first() else { return false };
    if genesis.block_id != BlockId(0) || !genesis.parents.is_empty() || genesis.stage != 0 || genesis.txn_id.is_some() {
        return false;
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.block_id.0 as usize != i || b.digest != digest(b.txn_id, &b.parents) {
            return false;
        }
        if i > 0 && (b.parents.is_empty() || b.txn_id.is_none()) {
            return false;
        }
        if b.parents.iter().any(|p| p.0 as usize >= i) {
            return false;
        }
    }
    match ledger.kind() {
        LedgerKind::Chain => blocks
            .iter()
            .enumerate()
            .skip(1)
            .all(|(i, b)| b.parents == [BlockId(i as u32 - 1)] && b.stage as usize == i),
        LedgerKind::Staged => {
            let mut prev: Vec<BlockId> = vec![BlockId(0)];
            let mut cur: Vec<BlockId> = Vec::new();
            let mut stage = 0u32;
            for b in blocks.iter().skip(1) {
                if b.stage == stage + 1 {
                    if stage > 0 {
                        prev = std::mem::take(&mut cur);
                    }
                    stage += 1;
                } else if b.stage != stage || stage == 0 {
                    return false;
                }
                if b.parents != prev {
                    return false;
                }
                cur.push(b.block_id);
            }
            true
        }
    }
}
