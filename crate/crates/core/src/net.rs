//! Round-based message transport.
//!
//! Delays are uniform on `1..=max_delay` and chained per ordered
//! (sender, receiver) pair: a message is never delivered before the previous
//! one on the same pair, and its delay is counted from whichever is later,
//! its send round or that previous delivery. This keeps every pair FIFO and
//! guarantees a receiver sees at most one message per sender per round.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CommitteeId, PeerId};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Round(pub u32);

impl Round {
    pub fn next(self) -> Round {
        Round(self.0 + 1)
    }

    pub fn plus(self, rounds: u32) -> Round {
        Round(self.0 + rounds)
    }

    pub fn since(self, earlier: Round) -> u32 {
        self.0 - earlier.0
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MsgKind {
    PrePrepare,
    Prepare,
    Commit,
    Propose,
    Notify,
}

/// Consensus payload. Opaque to the transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Message {
    pub committee: CommitteeId,
    pub kind: MsgKind,
    pub view: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Envelope {
    pub sender: PeerId,
    pub receiver: PeerId,
    pub msg: Message,
    pub send_round: Round,
    pub deliver_round: Round,
}

/// Envelopes of one send call that share a delivery round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Batch {
    pub sender: PeerId,
    pub msg: Message,
    pub send_round: Round,
    start: u32,
    end: u32,
}

/// Everything due in one round, grouped by originating send call.
#[derive(Debug, Default)]
pub struct Delivery {
    round: Round,
    batches: Vec<Batch>,
    receivers: Vec<PeerId>,
    /// Send call that owns the last batch, while it is still growing.
    open: Option<u64>,
}

impl Delivery {
    pub fn round(&self) -> Round {
        self.round
    }

    pub fn len(&self) -> usize {
        self.receivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.receivers.is_empty()
    }

    pub fn batches(&self) -> impl Iterator<Item = (&Batch, &[PeerId])> + '_ {
        self.batches.iter().map(|b| (b, &self.receivers[b.start as usize..b.end as usize]))
    }

    pub fn envelopes(&self) -> impl Iterator<Item = Envelope> + '_ {
        let deliver_round = self.round;
        self.batches().flat_map(move |(b, rs)| {
            rs.iter().map(move |&receiver| Envelope {
                sender: b.sender,
                receiver,
                msg: b.msg,
                send_round: b.send_round,
                deliver_round,
            })
        })
    }

    fn push(&mut self, call: u64, sender: PeerId, receiver: PeerId, msg: Message, send_round: Round) {
        let idx = self.receivers.len() as u32;
        self.receivers.push(receiver);
        match self.batches.last_mut() {
            Some(b) if self.open == Some(call) => b.end = idx + 1,
            _ => {
                self.batches.push(Batch { sender, msg, send_round, start: idx, end: idx + 1 });
                self.open = Some(call);
            }
        }
    }

    fn extend(&mut self, call: u64, sender: PeerId, receivers: &[PeerId], msg: Message, send_round: Round) {
        let start = self.receivers.len() as u32;
        self.receivers.extend(receivers.iter().copied().filter(|&r| r != sender));
        let end = self.receivers.len() as u32;
        self.batches.push(Batch { sender, msg, send_round, start, end });
        self.open = Some(call);
    }

    fn reset(&mut self, round: Round) {
        self.round = round;
        self.batches.clear();
        self.receivers.clear();
        self.open = None;
    }
}

#[derive(Debug)]
pub struct Network {
    n: usize,
    max_delay: u32,
    /// Last scheduled delivery round per ordered pair, row-major by sender.
    next_free: Vec<Round>,
    /// `pending[i]` holds envelopes due at round `now + i`.
    pending: VecDeque<Delivery>,
    spare: Vec<Delivery>,
    now: Round,
    in_flight: usize,
    calls: u64,
    rng: SimRng,
}

impl Network {
    pub fn new(n: usize, max_delay: u32, rng: SimRng) -> Result<Self> {
        if max_delay < 1 {
            return Err(Error::config("max delay must be at least one round"));
        }
        Ok(Network {
            n,
            max_delay,
            next_free: vec![Round(0); n * n],
            pending: VecDeque::new(),
            spare: Vec::new(),
            now: Round(0),
            in_flight: 0,
            calls: 0,
            rng,
        })
    }

    pub fn max_delay(&self) -> u32 {
        self.max_delay
    }

    /// The round whose envelopes the next [`Network::step`] delivers.
    pub fn now(&self) -> Round {
        self.now
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    fn draw_delay(&mut self) -> u32 {
        if self.max_delay == 1 {
            1
        } else {
            self.rng.random_range(1..=self.max_delay)
        }
    }

    fn bucket(&mut self, deliver_round: Round) -> &mut Delivery {
        let offset = (deliver_round.0 - self.now.0) as usize;
        while self.pending.len() <= offset {
            let round = self.now.plus(self.pending.len() as u32);
            let mut bucket = self.spare.pop().unwrap_or_default();
            bucket.reset(round);
            self.pending.push_back(bucket);
        }
        &mut self.pending[offset]
    }

    fn schedule(&mut self, call: u64, sender: PeerId, receiver: PeerId, msg: Message, send_round: Round) -> Round {
        debug_assert!(send_round.0 + 1 >= self.now.0, "send in the past");
        let slot = sender.index() * self.n + receiver.index();
        let from = self.next_free[slot].max(send_round);
        let deliver_round = from.plus(self.draw_delay());
        self.next_free[slot] = deliver_round;
        self.bucket(deliver_round).push(call, sender, receiver, msg, send_round);
        self.in_flight += 1;
        deliver_round
    }

    /// Unit-delay broadcast over idle pairs: every envelope lands next round,
    /// so the whole broadcast is stored as one batch. Returns `None` (having
    /// scheduled nothing) when some pair is still busy.
    fn broadcast_unit(
        &mut self,
        call: u64,
        sender: PeerId,
        recipients: &[PeerId],
        msg: Message,
        send_round: Round,
    ) -> Option<usize> {
        debug_assert!(send_round.0 + 1 >= self.now.0, "send in the past");
        let row = &mut self.next_free[sender.index() * self.n..(sender.index() + 1) * self.n];
        if recipients.iter().any(|r| *r != sender && row[r.index()] > send_round) {
            return None;
        }
        let deliver_round = send_round.next();
        for r in recipients {
            if *r != sender {
                row[r.index()] = deliver_round;
            }
        }
        let bucket = self.bucket(deliver_round);
        let before = bucket.len();
        bucket.extend(call, sender, recipients, msg, send_round);
        let sent = bucket.len() - before;
        self.in_flight += sent;
        Some(sent)
    }

    /// Schedules one envelope and returns it with its delivery round set.
    pub fn send(&mut self, sender: PeerId, receiver: PeerId, msg: Message, send_round: Round) -> Envelope {
        self.calls += 1;
        let deliver_round = self.schedule(self.calls, sender, receiver, msg, send_round);
        Envelope { sender, receiver, msg, send_round, deliver_round }
    }

    /// One envelope per recipient other than `sender`, each independently
    /// delayed. Returns the number scheduled.
    pub fn broadcast(&mut self, sender: PeerId, recipients: &[PeerId], msg: Message, send_round: Round) -> usize {
        self.calls += 1;
        let call = self.calls;
        if self.max_delay == 1 {
            if let Some(sent) = self.broadcast_unit(call, sender, recipients, msg, send_round) {
                return sent;
            }
        }
        let mut sent = 0;
        for &r in recipients {
            if r != sender {
                self.schedule(call, sender, r, msg, send_round);
                sent += 1;
            }
        }
        sent
    }

    /// Like [`Network::broadcast`] but records every scheduled envelope.
    pub fn broadcast_logged(
        &mut self,
        sender: PeerId,
        recipients: &[PeerId],
        msg: Message,
        send_round: Round,
        log: &mut Vec<Envelope>,
    ) -> usize {
        self.calls += 1;
        let call = self.calls;
        let mut sent = 0;
        for &receiver in recipients {
            if receiver != sender {
                let deliver_round = self.schedule(call, sender, receiver, msg, send_round);
                log.push(Envelope { sender, receiver, msg, send_round, deliver_round });
                sent += 1;
            }
        }
        sent
    }

    /// Removes everything due at the current round, then advances the clock
    /// by one. Hand the result back through [`Network::recycle`].
    pub fn step_batches(&mut self) -> Delivery {
        let due = self.pending.pop_front().unwrap_or_else(|| {
            let mut d = self.spare.pop().unwrap_or_default();
            d.reset(self.now);
            d
        });
        debug_assert_eq!(due.round, self.now);
        self.in_flight -= due.len();
        self.now = self.now.next();
        due
    }

    /// [`Network::step_batches`] flattened into envelopes.
    pub fn step(&mut self) -> Vec<Envelope> {
        let due = self.step_batches();
        let out = due.envelopes().collect();
        self.recycle(due);
        out
    }

    /// Returns a drained delivery for reuse.
    pub fn recycle(&mut self, due: Delivery) {
        if self.spare.len() < 16 {
            self.spare.push(due);
        }
    }

    /// Rounds at which the envelopes still in flight are due.
    pub fn pending_rounds(&self) -> Vec<Round> {
        self.pending.iter().flat_map(|b| std::iter::repeat_n(b.round, b.len())).collect()
    }
}
