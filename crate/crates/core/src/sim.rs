//! The round loop tying network, engines, schedulers, adversary and
//! workload together.
//!
//! Each round runs, in order: message delivery, engine steps (ascending
//! committee id), completion handling, transaction generation, scheduling,
//! dispatch and the adversary shuffle. Committees dispatched in round `r`
//! start their protocol in round `r + 1`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, SwapRecord};
use crate::consensus::{start_consensus, Engine, EngineEvent, EngineKind, EngineParams, MiningModel, Protocol};
use crate::consensus::{Broadcast, EngineCtx};
use crate::error::{Error, Result};
use crate::events::{Event, EventKind, EventLevel, EventLog};
use crate::ledger::{BlockEntry, Ledger};
use crate::metrics::{CommitteeRecord, MetricsLog, RoundCounters};
use crate::model::{Committee, CommitteeId, GroupId, Peer, PeerId, SizingConfig, Transaction, TxnId};
use crate::net::{Envelope, Message, Network, Round};
use crate::rng::{stream, SimRng, Stream};
use crate::scheduler::{CommitteeSizing, CompositeScheduler, DynamicScheduler, Layout, Phase, Seat, Waiting};
use crate::workload::{Workload, WorkloadConfig};

/// The channel table is dense in `n`, so networks are capped.
pub const MAX_PEERS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub layout: Layout,
    pub engine: EngineKind,
    /// `Some(s)`: every committee has `s` peers and the adversary shuffles
    /// every `shuffle_period` rounds.
    pub fixed_size: Option<usize>,
    pub n: usize,
    pub rounds: u32,
    pub max_delay: u32,
    pub byz_fraction: f64,
    pub workload: WorkloadConfig,
    pub sizing: SizingConfig,
    pub gsize: usize,
    pub win_size: usize,
    pub view_change_timeout: Option<u32>,
    pub recording_rounds: u32,
    pub shuffle_period: u32,
    pub seed: u64,
    pub event_level: EventLevel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            layout: Layout::Composite,
            engine: EngineKind::Pbft,
            fixed_size: None,
            n: 1024,
            rounds: 1000,
            max_delay: 1,
            byz_fraction: 0.1,
            workload: WorkloadConfig::default(),
            sizing: SizingConfig::default(),
            gsize: 64,
            win_size: 1024,
            view_change_timeout: None,
            recording_rounds: 1,
            shuffle_period: 10,
            seed: 0,
            event_level: EventLevel::Off,
        }
    }
}

impl SimConfig {
    pub fn committee_sizing(&self) -> CommitteeSizing {
        match self.fixed_size {
            Some(s) => CommitteeSizing::Fixed(s),
            None => CommitteeSizing::Adaptive(self.sizing),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_PEERS {
            return Err(Error::config(format!("network size {} outside 1..={MAX_PEERS}", self.n)));
        }
        if self.rounds == 0 {
            return Err(Error::config("a computation needs at least one round"));
        }
        if self.max_delay < 1 {
            return Err(Error::config("max delay must be at least one round"));
        }
        if !(0.0..1.0).contains(&self.byz_fraction) {
            return Err(Error::config(format!("byzantine fraction {} outside [0, 1)", self.byz_fraction)));
        }
        if self.shuffle_period == 0 {
            return Err(Error::config("shuffle period must be at least one round"));
        }
        if self.workload.levels != self.sizing.levels {
            return Err(Error::config("workload and sizing disagree on the number of levels"));
        }
        if let Some(s) = self.fixed_size {
            if s == 0 || s > self.n {
                return Err(Error::config(format!("fixed committee size {s} outside 1..={}", self.n)));
            }
        }
        if self.view_change_timeout == Some(0) {
            return Err(Error::config("view change timeout must be at least one round"));
        }
        match self.layout {
            Layout::Composite => {
                CompositeScheduler::new(self.n, self.gsize, self.committee_sizing())?;
            }
            Layout::Dynamic => {
                DynamicScheduler::new(self.n, self.win_size, self.committee_sizing(), stream(0, Stream::Selection))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Sched {
    Composite(CompositeScheduler),
    Dynamic { sched: DynamicScheduler, phase: Phase, stage: Vec<(CommitteeId, BlockEntry)> },
}

#[derive(Debug)]
struct Active {
    committee: Committee,
    engine: Engine,
    /// Set once the engine reports a Byzantine winning miner.
    byz_miner: bool,
    outcome: Option<bool>,
}

impl Active {
    fn outcome_defeated(&self) -> bool {
        match self.committee.engine {
            EngineKind::Pow => self.byz_miner,
            _ => self.committee.defeated,
        }
    }
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct SimOutput {
    pub config: SimConfig,
    pub metrics: MetricsLog,
    pub events: EventLog,
    pub swaps: Vec<SwapRecord>,
    /// One chain per group (Composite) or the single staged ledger.
    pub ledgers: Vec<Ledger>,
    /// Delivery rounds of envelopes still in flight at the cutoff.
    pub undelivered: Vec<Round>,
    pub peers: Vec<Peer>,
}

pub struct Simulation {
    cfg: SimConfig,
    round: Round,
    peers: Vec<Peer>,
    slot_of: Vec<u32>,
    net: Network,
    adversary: Adversary,
    workload: Workload,
    sched: Sched,
    params: EngineParams,
    mining_rng: SimRng,
    active: Vec<Option<Active>>,
    active_ids: Vec<u32>,
    queue: VecDeque<Waiting>,
    metrics: MetricsLog,
    events: EventLog,
    outbox: Vec<Broadcast>,
    engine_events: Vec<EngineEvent>,
    sent: Vec<Envelope>,
    assigned: usize,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let mut peers: Vec<Peer> = (0..cfg.n as u32).map(|i| Peer::new(PeerId(i))).collect();
        let adversary = Adversary::new(&mut peers, cfg.byz_fraction, stream(seed, Stream::Adversary))?;
        let sizing = cfg.committee_sizing();
        let sched = match cfg.layout {
            Layout::Composite => {
                let s = CompositeScheduler::new(cfg.n, cfg.gsize, sizing)?;
                for p in peers.iter_mut() {
                    p.group = Some(GroupId((p.id.index() / cfg.gsize) as u32));
                }
                Sched::Composite(s)
            }
            Layout::Dynamic => Sched::Dynamic {
                sched: DynamicScheduler::new(cfg.n, cfg.win_size, sizing, stream(seed, Stream::Selection))?,
                phase: Phase::Idle,
                stage: Vec::new(),
            },
        };
        let params = EngineParams {
            max_delay: cfg.max_delay,
            view_change_timeout: cfg.view_change_timeout,
            mining: MiningModel::default(),
        };
        Ok(Simulation {
            round: Round(0),
            slot_of: vec![0; cfg.n],
            net: Network::new(cfg.n, cfg.max_delay, stream(seed, Stream::Delay))?,
            workload: Workload::new(cfg.workload, stream(seed, Stream::Workload))?,
            mining_rng: stream(seed, Stream::Mining),
            events: EventLog::new(cfg.event_level),
            peers,
            adversary,
            sched,
            params,
            active: Vec::new(),
            active_ids: Vec::new(),
            queue: VecDeque::new(),
            metrics: MetricsLog::default(),
            outbox: Vec::new(),
            engine_events: Vec::new(),
            sent: Vec::new(),
            assigned: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// The next round to be executed.
    pub fn round(&self) -> Round {
        self.round
    }

    pub fn peers(&self) -> &[Peer] {
        &self.peers
    }

    pub fn active_committees(&self) -> impl Iterator<Item = &Committee> + '_ {
        self.active_ids.iter().map(|&id| &self.active[id as usize].as_ref().expect("active").committee)
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn metrics(&self) -> &MetricsLog {
        &self.metrics
    }

    pub fn adversary(&self) -> &Adversary {
        &self.adversary
    }

    pub fn composite(&self) -> Option<&CompositeScheduler> {
        match &self.sched {
            Sched::Composite(s) => Some(s),
            Sched::Dynamic { .. } => None,
        }
    }

    pub fn dynamic(&self) -> Option<(&DynamicScheduler, Phase)> {
        match &self.sched {
            Sched::Dynamic { sched, phase, .. } => Some((sched, *phase)),
            Sched::Composite(_) => None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.round.0 >= self.cfg.rounds
    }

    /// Executes one round.
    pub fn step(&mut self) -> Result<()> {
        let r = self.round;
        let mut counters = RoundCounters::default();
        self.deliver(r);
        let completed = self.run_engines(r);
        counters.confirmed = completed.len() as u32;
        for cid in completed {
            self.complete(cid, r)?;
        }
        if let Some((level, generator)) = self.workload.generate(r, self.cfg.n) {
            let id = TxnId(self.metrics.txns.len() as u32);
            self.metrics.txns.push(Transaction::new(id, level, generator, r));
            self.queue.push_back(Waiting { txn: id, level });
            self.events
                .push(Event::new(r, EventKind::Generate).sender(generator).txn(id).value(u64::from(level.get())));
            counters.generated = 1;
        }
        let seats = self.schedule(r)?;
        counters.dispatched = seats.len() as u32;
        for seat in seats {
            self.dispatch(seat, r)?;
        }
        let shuffle_now = match (self.cfg.fixed_size, self.cfg.layout) {
            (Some(_), _) => (r.0 + 1).is_multiple_of(self.cfg.shuffle_period),
            (None, Layout::Composite) => true,
            // Dynamic shuffles right after each recording stage
            (None, Layout::Dynamic) => false,
        };
        if shuffle_now {
            self.shuffle(r);
        }
        counters.active_committees = self.active_ids.len() as u32;
        counters.queue_len = self.queue.len() as u32;
        counters.free_capacity = (self.cfg.n - self.assigned) as u32;
        self.metrics.per_round.push(counters);
        self.round = r.next();
        Ok(())
    }

    fn deliver(&mut self, r: Round) {
        let due = self.net.step_batches();
        debug_assert_eq!(due.round(), r);
        let slot_of = &self.slot_of;
        for (b, receivers) in due.batches() {
            let cid = b.msg.committee;
            let kind = match self.active.get_mut(cid.0 as usize).and_then(|a| a.as_mut()) {
                Some(a) => {
                    let from = slot_of[b.sender.index()] as usize;
                    let to = receivers.iter().map(|p| slot_of[p.index()] as usize);
                    a.engine.on_messages(&a.committee, from, to, b.msg.kind, b.msg.view);
                    EventKind::Deliver
                }
                None => EventKind::Stale,
            };
            if self.events.detailed() {
                for &rcv in receivers {
                    self.events.push(Event::new(r, kind).sender(b.sender).receiver(rcv).committee(cid));
                }
            }
        }
        self.net.recycle(due);
    }

    /// Steps every active engine; returns the ids that finished this round.
    fn run_engines(&mut self, r: Round) -> Vec<u32> {
        let detailed = self.events.detailed();
        let mut completed = Vec::new();
        for &cid in &self.active_ids {
            let a = self.active[cid as usize].as_mut().expect("active");
            let mut ctx = EngineCtx {
                round: r,
                committee: &a.committee,
                outbox: &mut self.outbox,
                events: &mut self.engine_events,
                rng: &mut self.mining_rng,
            };
            a.engine.on_round(&mut ctx);
            let c = &a.committee;
            for b in self.outbox.drain(..) {
                let msg = Message { committee: c.id, kind: b.kind, view: b.view };
                let sender = c.members[b.from];
                if detailed {
                    self.net.broadcast_logged(sender, &c.members, msg, r, &mut self.sent);
                    for e in self.sent.drain(..) {
                        self.events
                            .push(Event::new(r, EventKind::Send).sender(e.sender).receiver(e.receiver).committee(c.id));
                    }
                } else {
                    self.net.broadcast(sender, &c.members, msg, r);
                }
            }
            for ev in self.engine_events.drain(..) {
                let base = |k| Event::new(r, k).committee(c.id).txn(c.txn);
                let logged = match ev {
                    EngineEvent::Started => base(EventKind::Start),
                    EngineEvent::ViewChange { view } => base(EventKind::ViewChange).value(u64::from(view)),
                    EngineEvent::Mined { miner } => {
                        a.byz_miner = c.byzantine[c.members.binary_search(&miner).expect("miner is a member")];
                        base(EventKind::Mined).sender(miner)
                    }
                    EngineEvent::Restart { miner } => base(EventKind::Restart).sender(miner),
                    EngineEvent::Confirmed => {
                        let defeated = match c.engine {
                            EngineKind::Pow => a.byz_miner,
                            _ => c.defeated,
                        };
                        base(EventKind::Confirm).value(u64::from(defeated))
                    }
                    EngineEvent::Completed { defeated } => {
                        a.outcome = Some(defeated);
                        base(EventKind::Complete).value(u64::from(defeated))
                    }
                };
                self.events.push(logged);
            }
            if a.engine.is_done() {
                completed.push(cid);
            }
        }
        completed
    }

    fn complete(&mut self, cid: u32, r: Round) -> Result<()> {
        let a = self.active[cid as usize].take().expect("completed committee is active");
        self.active_ids.retain(|&x| x != cid);
        let defeated = a.outcome.unwrap_or_else(|| a.outcome_defeated());
        debug_assert_eq!(defeated, a.outcome_defeated());
        let confirm = a.engine.confirm_round().expect("finished engines have confirmed");
        let c = a.committee;
        let stats = a.engine.stats();
        let rec = &mut self.metrics.committees[cid as usize];
        rec.defeated = defeated;
        rec.confirm_round = Some(confirm);
        rec.done_round = Some(r);
        rec.view_changes = stats.view_changes;
        rec.restarts = stats.restarts;
        self.metrics.txns[c.txn.0 as usize].mark_confirmed(confirm, defeated);
        for p in &c.members {
            debug_assert_eq!(self.peers[p.index()].assignment, Some(c.id));
            self.peers[p.index()].assignment = None;
        }
        self.assigned -= c.size();
        let entry = BlockEntry::from_committee(&c, defeated);
        match &mut self.sched {
            Sched::Composite(s) => {
                s.record(&c.groups, &entry)?;
                s.on_done(&c.groups);
                self.metrics.txns[c.txn.0 as usize].mark_recorded(r);
                for g in &c.groups {
                    self.events.push(Event::new(r, EventKind::Record).committee(c.id).txn(c.txn).value(u64::from(g.0)));
                }
            }
            Sched::Dynamic { phase, stage, .. } => {
                stage.push((c.id, entry));
                if self.active_ids.is_empty() {
                    debug_assert_eq!(*phase, Phase::Consensus);
                    *phase = Phase::Recording { at: r.plus(self.cfg.recording_rounds) };
                }
            }
        }
        Ok(())
    }

    fn schedule(&mut self, r: Round) -> Result<Vec<Seat>> {
        let adaptive = self.cfg.fixed_size.is_none();
        match &mut self.sched {
            Sched::Composite(s) => s.evaluate(&mut self.queue),
            Sched::Dynamic { sched, phase, stage } => {
                if *phase == (Phase::Recording { at: r }) {
                    let mut written = std::mem::take(stage);
                    written.sort_by_key(|(id, _)| *id);
                    let txns: Vec<(CommitteeId, TxnId)> = written.iter().map(|(id, e)| (*id, e.txn)).collect();
                    let number = sched.record_stage(written.into_iter().map(|(_, e)| e).collect())?;
                    for (id, t) in txns {
                        self.metrics.txns[t.0 as usize].mark_recorded(r);
                        self.events
                            .push(Event::new(r, EventKind::Record).committee(id).txn(t).value(u64::from(number)));
                    }
                    self.events.push(Event::new(r, EventKind::Stage).value(u64::from(number)));
                    *phase = Phase::Idle;
                    if adaptive {
                        let k = self.adversary.shuffle(&mut self.peers, r);
                        if k > 0 {
                            self.events.push(Event::new(r, EventKind::Shuffle).value(k as u64));
                        }
                    }
                }
                if *phase != Phase::Idle {
                    return Ok(Vec::new());
                }
                let seats = sched.form_committees(&mut self.queue)?;
                if !seats.is_empty() {
                    *phase = Phase::Consensus;
                }
                Ok(seats)
            }
        }
    }

    fn dispatch(&mut self, seat: Seat, r: Round) -> Result<()> {
        let id = CommitteeId(self.active.len() as u32);
        let mut c = Committee::new(id, seat.members, &self.peers, seat.level, self.cfg.engine, seat.txn, r)?;
        c.groups = seat.groups;
        for (slot, p) in c.members.iter().enumerate() {
            let peer = &mut self.peers[p.index()];
            assert!(peer.assignment.is_none(), "peer {} already serves a committee", p.0);
            peer.assignment = Some(id);
            self.slot_of[p.index()] = slot as u32;
        }
        self.assigned += c.size();
        self.metrics.txns[c.txn.0 as usize].mark_dispatched(r);
        self.events.push(Event::new(r, EventKind::Dispatch).committee(id).txn(c.txn).value(c.size() as u64));
        if self.events.protocol() {
            for p in &c.members {
                self.events.push(Event::new(r, EventKind::Assign).sender(*p).committee(id).txn(c.txn));
            }
        }
        self.metrics.committees.push(CommitteeRecord {
            id,
            txn: c.txn,
            level: c.level.get(),
            size: c.size(),
            engine: c.engine,
            byz_count: c.byz_count(),
            classified_defeated: c.defeated,
            defeated: false,
            view_changes: 0,
            restarts: 0,
            dispatch_round: r,
            confirm_round: None,
            done_round: None,
            members: c.members.clone(),
        });
        let engine = start_consensus(&c, &self.params, r.next())?;
        self.active.push(Some(Active { committee: c, engine, byz_miner: false, outcome: None }));
        self.active_ids.push(id.0);
        Ok(())
    }

    fn shuffle(&mut self, r: Round) {
        let k = self.adversary.shuffle(&mut self.peers, r);
        if k > 0 {
            self.events.push(Event::new(r, EventKind::Shuffle).value(k as u64));
        }
    }

    pub fn finish(mut self) -> SimOutput {
        self.metrics.rounds = self.round.0;
        let ledgers = match self.sched {
            Sched::Composite(s) => s.into_ledgers(),
            Sched::Dynamic { sched, .. } => vec![sched.into_ledger()],
        };
        SimOutput {
            undelivered: self.net.pending_rounds(),
            config: self.cfg,
            metrics: self.metrics,
            events: self.events,
            swaps: self.adversary.into_swap_log(),
            ledgers,
            peers: self.peers,
        }
    }
}

/// Runs one computation to completion.
pub fn run_simulation(cfg: SimConfig) -> Result<SimOutput> {
    let mut sim = Simulation::new(cfg)?;
    while !sim.is_finished() {
        sim.step()?;
    }
    Ok(sim.finish())
}
