//! Domain types shared by every module: peers, transactions, committees and
//! the security-level sizing rule.

use serde::{Deserialize, Serialize};

use crate::consensus::{classify_committee, Classification, EngineKind};
use crate::error::{Error, Result};
use crate::net::Round;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub u32);

impl PeerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommitteeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Honesty {
    Honest,
    Byzantine,
}

#[derive(Debug, Clone)]
pub struct Peer {
    pub id: PeerId,
    pub honesty: Honesty,
    pub group: Option<GroupId>,
    pub assignment: Option<CommitteeId>,
}

impl Peer {
    pub fn new(id: PeerId) -> Self {
        Peer { id, honesty: Honesty::Honest, group: None, assignment: None }
    }

    pub fn is_byzantine(&self) -> bool {
        self.honesty == Honesty::Byzantine
    }

    pub fn is_idle(&self) -> bool {
        self.assignment.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecurityLevel(u8);

impl SecurityLevel {
    pub fn new(level: u8, max: u8) -> Result<Self> {
        if level == 0 || level > max {
            return Err(Error::LevelOutOfRange { level, max });
        }
        Ok(SecurityLevel(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "rule")]
pub enum SizingRule {
    /// `base * 2^(level-1)`.
    Exponential,
    /// `level * sec_mult`.
    Linear { sec_mult: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingConfig {
    pub base: usize,
    pub levels: u8,
    pub rule: SizingRule,
}

impl Default for SizingConfig {
    fn default() -> Self {
        SizingConfig { base: 64, levels: 5, rule: SizingRule::Exponential }
    }
}

/// Number of peers a committee for `level` must contain.
pub fn committee_size_for_level(level: SecurityLevel, config: &SizingConfig) -> Result<usize> {
    let l = level.get();
    if l == 0 || l > config.levels {
        return Err(Error::LevelOutOfRange { level: l, max: config.levels });
    }
    let size = match config.rule {
        SizingRule::Exponential => {
            config.base.checked_shl(u32::from(l - 1)).ok_or_else(|| Error::config("committee size overflows"))?
        }
        SizingRule::Linear { sec_mult } => usize::from(l) * sec_mult,
    };
    if size == 0 {
        return Err(Error::config("committee size must be positive"));
    }
    Ok(size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxnStatus {
    Pending,
    Tentative,
    Recorded,
    Discarded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxnId,
    pub level: SecurityLevel,
    pub generator: PeerId,
    pub gen_round: Round,
    pub status: TxnStatus,
    pub dispatch_round: Option<Round>,
    pub confirm_round: Option<Round>,
    pub record_round: Option<Round>,
    pub defeated: bool,
}

impl Transaction {
    pub fn new(id: TxnId, level: SecurityLevel, generator: PeerId, gen_round: Round) -> Self {
        Transaction {
            id,
            level,
            generator,
            gen_round,
            status: TxnStatus::Pending,
            dispatch_round: None,
            confirm_round: None,
            record_round: None,
            defeated: false,
        }
    }

    fn advance(&mut self, to: TxnStatus) {
        let ok = matches!(
            (self.status, to),
            (TxnStatus::Pending, TxnStatus::Tentative)
                | (TxnStatus::Tentative, TxnStatus::Recorded)
                | (TxnStatus::Tentative, TxnStatus::Discarded)
        );
        assert!(ok, "txn {:?}: illegal transition {:?} -> {:?}", self.id, self.status, to);
        self.status = to;
    }

    pub fn mark_dispatched(&mut self, round: Round) {
        self.advance(TxnStatus::Tentative);
        self.dispatch_round = Some(round);
    }

    /// First confirmation (or winning mine). Does not change status: the
    /// transaction stays tentative until it is written to a ledger.
    pub fn mark_confirmed(&mut self, round: Round, defeated: bool) {
        assert_eq!(self.status, TxnStatus::Tentative);
        assert!(round >= self.gen_round);
        self.confirm_round = Some(round);
        self.defeated = defeated;
    }

    pub fn mark_recorded(&mut self, round: Round) {
        self.advance(TxnStatus::Recorded);
        self.record_round = Some(round);
    }

    pub fn mark_discarded(&mut self) {
        self.advance(TxnStatus::Discarded);
    }
}

/// A consensus committee. `members` is sorted by id; per-slot vectors are
/// indexed by position in `members`.
#[derive(Debug, Clone)]
pub struct Committee {
    pub id: CommitteeId,
    pub members: Vec<PeerId>,
    /// Honesty snapshot taken at dispatch. Fixed for the committee's life.
    pub byzantine: Vec<bool>,
    pub level: SecurityLevel,
    pub engine: EngineKind,
    pub txn: TxnId,
    pub defeated: bool,
    pub groups: Vec<GroupId>,
    pub dispatch_round: Round,
}

impl Committee {
    pub fn new(
        id: CommitteeId,
        mut members: Vec<PeerId>,
        peers: &[Peer],
        level: SecurityLevel,
        engine: EngineKind,
        txn: TxnId,
        dispatch_round: Round,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::config("committee has no members"));
        }
        members.sort_unstable();
        let byzantine: Vec<bool> = members.iter().map(|p| peers[p.index()].is_byzantine()).collect();
        let byz = byzantine.iter().filter(|&&b| b).count();
        let defeated = classify_committee(engine, members.len(), byz) == Classification::Defeated;
        Ok(Committee { id, members, byzantine, level, engine, txn, defeated, groups: Vec::new(), dispatch_round })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn byz_count(&self) -> usize {
        self.byzantine.iter().filter(|&&b| b).count()
    }

    /// Leader for `view`: the `(view mod size)`-th smallest member id.
    pub fn leader_slot(&self, view: u32) -> usize {
        view as usize % self.members.len()
    }

    pub fn leader(&self, view: u32) -> PeerId {
        self.members[self.leader_slot(view)]
    }

    /// Whether the member in `slot` takes part in the protocol. Byzantine
    /// members stay silent in a reliable committee; in a defeated committee
    /// the adversary already controls the outcome and its peers cooperate.
    pub fn participates(&self, slot: usize) -> bool {
        !self.byzantine[slot] || self.defeated
    }
}
