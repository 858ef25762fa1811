//! In-committee consensus engines.
//!
//! Each engine is a deterministic state machine over one committee. The
//! simulation feeds it delivered messages through [`Protocol::on_message`]
//! and calls [`Protocol::on_round`] once per round; the engine answers with
//! broadcasts (placed in the outbox) and lifecycle events.

mod pbft;
mod pow;
mod sbft;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Committee, PeerId};
use crate::net::{MsgKind, Round};
use crate::rng::SimRng;

pub use pbft::PbftState;
pub use pow::{MiningModel, PowState};
pub use sbft::SbftState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Pbft,
    Sbft,
    Pow,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::Pbft, EngineKind::Sbft, EngineKind::Pow];

    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Pbft => "pbft",
            EngineKind::Sbft => "sbft",
            EngineKind::Pow => "pow",
        }
    }

    /// Tolerated Byzantine fraction as `(numerator, denominator)`.
    pub fn resiliency(self) -> (usize, usize) {
        match self {
            EngineKind::Pbft => (1, 3),
            EngineKind::Sbft | EngineKind::Pow => (1, 2),
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pbft" => Ok(EngineKind::Pbft),
            "sbft" => Ok(EngineKind::Sbft),
            "pow" => Ok(EngineKind::Pow),
            other => Err(Error::config(format!("unknown engine `{other}` (expected pbft, sbft or pow)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Reliable,
    Defeated,
}

/// A committee is reliable while its Byzantine share stays strictly below
/// the engine's resiliency fraction.
pub fn classify_committee(kind: EngineKind, size: usize, byzantine: usize) -> Classification {
    let (num, den) = kind.resiliency();
    if byzantine * den >= size * num {
        Classification::Defeated
    } else {
        Classification::Reliable
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineParams {
    pub max_delay: u32,
    /// Rounds between detecting a faulty leader and starting the next view.
    /// `None` selects the engine default (PBFT: `2 * max_delay`; SBFT:
    /// `max_delay`, so a failed SBFT view costs four phase windows).
    pub view_change_timeout: Option<u32>,
    pub mining: MiningModel,
}

impl EngineParams {
    pub fn new(max_delay: u32) -> Self {
        EngineParams { max_delay, view_change_timeout: None, mining: MiningModel::default() }
    }
}

/// A broadcast requested by a committee member, addressed to the rest of
/// the committee.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Broadcast {
    pub from: usize,
    pub kind: MsgKind,
    pub view: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineEvent {
    Started,
    ViewChange {
        view: u32,
    },
    /// First member confirmation, or the winning mine.
    Confirmed,
    Mined {
        miner: PeerId,
    },
    Restart {
        miner: PeerId,
    },
    Completed {
        defeated: bool,
    },
}

pub struct EngineCtx<'a> {
    pub round: Round,
    pub committee: &'a Committee,
    pub outbox: &'a mut Vec<Broadcast>,
    pub events: &'a mut Vec<EngineEvent>,
    pub rng: &'a mut SimRng,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStats {
    pub view_changes: u32,
    pub restarts: u32,
}

pub trait Protocol {
    /// Message `kind` for `view` from member slot `from` reached slot `to`.
    fn on_message(&mut self, committee: &Committee, from: usize, to: usize, kind: MsgKind, view: u32);
    /// One message from `from` reaching several members.
    fn on_messages<I: IntoIterator<Item = usize>>(
        &mut self,
        committee: &Committee,
        from: usize,
        to: I,
        kind: MsgKind,
        view: u32,
    ) where
        Self: Sized,
    {
        for t in to {
            self.on_message(committee, from, t, kind, view);
        }
    }
    fn on_round(&mut self, ctx: &mut EngineCtx<'_>);
    fn is_done(&self) -> bool;
    fn confirm_round(&self) -> Option<Round>;
    fn stats(&self) -> EngineStats;
}

#[derive(Debug, Clone)]
pub enum Engine {
    Pbft(PbftState),
    Sbft(SbftState),
    Pow(PowState),
}

/// Builds the engine for `committee`. Protocol activity begins at `start`.
pub fn start_consensus(committee: &Committee, params: &EngineParams, start: Round) -> Result<Engine> {
    if committee.members.is_empty() {
        return Err(Error::config("cannot run consensus in an empty committee"));
    }
    if params.max_delay == 0 {
        return Err(Error::config("max delay must be at least one round"));
    }
    let n = committee.size();
    Ok(match committee.engine {
        EngineKind::Pbft => {
            Engine::Pbft(PbftState::new(n, start, params.view_change_timeout.unwrap_or(2 * params.max_delay)))
        }
        EngineKind::Sbft => Engine::Sbft(SbftState::new(
            n,
            start,
            params.max_delay,
            params.view_change_timeout.unwrap_or(params.max_delay),
        )),
        EngineKind::Pow => Engine::Pow(PowState::new(n, start, params.mining)),
    })
}

impl Protocol for Engine {
    fn on_message(&mut self, committee: &Committee, from: usize, to: usize, kind: MsgKind, view: u32) {
        match self {
            Engine::Pbft(s) => s.on_message(committee, from, to, kind, view),
            Engine::Sbft(s) => s.on_message(committee, from, to, kind, view),
            Engine::Pow(s) => s.on_message(committee, from, to, kind, view),
        }
    }

    fn on_messages<I: IntoIterator<Item = usize>>(
        &mut self,
        committee: &Committee,
        from: usize,
        to: I,
        kind: MsgKind,
        view: u32,
    ) {
        match self {
            Engine::Pbft(s) => s.on_messages(committee, from, to, kind, view),
            Engine::Sbft(s) => s.on_messages(committee, from, to, kind, view),
            Engine::Pow(s) => s.on_messages(committee, from, to, kind, view),
        }
    }

    fn on_round(&mut self, ctx: &mut EngineCtx<'_>) {
        match self {
            Engine::Pbft(s) => s.on_round(ctx),
            Engine::Sbft(s) => s.on_round(ctx),
            Engine::Pow(s) => s.on_round(ctx),
        }
    }

    fn is_done(&self) -> bool {
        match self {
            Engine::Pbft(s) => s.is_done(),
            Engine::Sbft(s) => s.is_done(),
            Engine::Pow(s) => s.is_done(),
        }
    }

    fn confirm_round(&self) -> Option<Round> {
        match self {
            Engine::Pbft(s) => s.confirm_round(),
            Engine::Sbft(s) => s.confirm_round(),
            Engine::Pow(s) => s.confirm_round(),
        }
    }

    fn stats(&self) -> EngineStats {
        match self {
            Engine::Pbft(s) => s.stats(),
            Engine::Sbft(s) => s.stats(),
            Engine::Pow(s) => s.stats(),
        }
    }
}

/// `n x n` bit set recording which sender's vote each member has counted.
/// Rows are senders, so one broadcast touches one contiguous row.
#[derive(Debug, Clone)]
pub(crate) struct VoteMatrix {
    words: usize,
    bits: Vec<u64>,
}

impl VoteMatrix {
    pub(crate) fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        VoteMatrix { words, bits: vec![0; words * n] }
    }

    /// Marks `from`'s vote at `to`; false if it was already counted.
    pub(crate) fn insert(&mut self, to: usize, from: usize) -> bool {
        let w = &mut self.bits[from * self.words + to / 64];
        let mask = 1u64 << (to % 64);
        let fresh = *w & mask == 0;
        *w |= mask;
        fresh
    }

    pub(crate) fn clear(&mut self) {
        self.bits.iter_mut().for_each(|w| *w = 0);
    }
}
