//! Committee formation: Composite (group-based) and Dynamic (window-based)
//! scheduling, each with an optional fixed committee size.

mod composite;
mod dynamic;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{committee_size_for_level, GroupId, PeerId, SecurityLevel, SizingConfig, TxnId};

pub use composite::CompositeScheduler;
pub use dynamic::{selection_window, DynamicScheduler, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Composite,
    Dynamic,
}

impl Layout {
    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Composite => "composite",
            Layout::Dynamic => "dynamic",
        }
    }
}

/// How many peers a transaction's committee needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CommitteeSizing {
    /// Size follows the transaction's security level.
    Adaptive(SizingConfig),
    /// Every committee has this many peers regardless of level.
    Fixed(usize),
}

impl CommitteeSizing {
    pub fn size_for(&self, level: SecurityLevel) -> Result<usize> {
        match self {
            CommitteeSizing::Adaptive(cfg) => committee_size_for_level(level, cfg),
            CommitteeSizing::Fixed(s) => Ok(*s),
        }
    }

    /// Largest committee any admissible transaction can require.
    pub fn max_size(&self) -> Result<usize> {
        match self {
            CommitteeSizing::Adaptive(cfg) => {
                committee_size_for_level(SecurityLevel::new(cfg.levels, cfg.levels)?, cfg)
            }
            CommitteeSizing::Fixed(s) => Ok(*s),
        }
    }

    /// All distinct committee sizes in use.
    pub fn sizes(&self) -> Result<Vec<usize>> {
        match self {
            CommitteeSizing::Adaptive(cfg) => {
                (1..=cfg.levels).map(|l| committee_size_for_level(SecurityLevel::new(l, cfg.levels)?, cfg)).collect()
            }
            CommitteeSizing::Fixed(s) => Ok(vec![*s]),
        }
    }
}

/// A transaction waiting for a committee.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Waiting {
    pub txn: TxnId,
    pub level: SecurityLevel,
}

/// A seated transaction and the peers that will approve it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seat {
    pub txn: TxnId,
    pub level: SecurityLevel,
    /// Sorted by id.
    pub members: Vec<PeerId>,
    /// Composite only.
    pub groups: Vec<GroupId>,
}
