//! Optional newline-delimited JSON event log.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{CommitteeId, PeerId, TxnId};
use crate::net::Round;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventLevel {
    #[default]
    Off,
    /// Transaction, committee, ledger and adversary events.
    Protocol,
    /// Additionally every message send and delivery.
    Detailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    /// `value` = security level, `sender` = generating peer.
    Generate,
    /// Committee formed for `txn`; `value` = size.
    Dispatch,
    /// `sender` joined `committee`.
    Assign,
    Start,
    /// `value` = new view.
    ViewChange,
    /// `sender` = winning miner.
    Mined,
    /// `sender` = Byzantine winner whose block was thrown away.
    Restart,
    /// First confirmation; `value` = 1 if the transaction counts as defeated.
    Confirm,
    /// Committee finished and released its peers; `value` as for `Confirm`.
    Complete,
    /// Transaction written to a ledger; `value` = stage (Dynamic) or group.
    Record,
    /// Dynamic recording stage closed; `value` = stage number.
    Stage,
    /// Adversary swap; `value` = number of peers swapped each way.
    Shuffle,
    Send,
    Deliver,
    /// Delivered after its committee finished; ignored.
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub round: Round,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<PeerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver: Option<PeerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub committee: Option<CommitteeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txn: Option<TxnId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<u64>,
}

impl Event {
    pub fn new(round: Round, kind: EventKind) -> Self {
        Event { round, kind, sender: None, receiver: None, committee: None, txn: None, value: None }
    }

    pub fn sender(mut self, p: PeerId) -> Self {
        self.sender = Some(p);
        self
    }

    pub fn receiver(mut self, p: PeerId) -> Self {
        self.receiver = Some(p);
        self
    }

    pub fn committee(mut self, c: CommitteeId) -> Self {
        self.committee = Some(c);
        self
    }

    pub fn txn(mut self, t: TxnId) -> Self {
        self.txn = Some(t);
        self
    }

    pub fn value(mut self, v: u64) -> Self {
        self.value = Some(v);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    level: EventLevel,
    events: Vec<Event>,
}

impl EventLog {
    pub fn new(level: EventLevel) -> Self {
        EventLog { level, events: Vec::new() }
    }

    pub fn level(&self) -> EventLevel {
        self.level
    }

    pub fn protocol(&self) -> bool {
        self.level >= EventLevel::Protocol
    }

    pub fn detailed(&self) -> bool {
        self.level >= EventLevel::Detailed
    }

    pub fn push(&mut self, e: Event) {
        if self.protocol() {
            self.events.push(e);
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_ndjson(&mut out)?;
        Ok(out)
    }

    pub fn parse_ndjson(text: &str) -> Result<Vec<Event>> {
        text.lines().filter(|l| !l.is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
    }
}
