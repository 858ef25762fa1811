#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use blockguard::adversary::byzantine_count;
use blockguard::consensus::EngineKind;
use blockguard::events::{Event, EventKind, EventLevel};
use blockguard::ledger::validate_ledger;
use blockguard::metrics::MetricsLog;
use blockguard::model::{CommitteeId, PeerId, TxnStatus};
use blockguard::net::Round;
use blockguard::scheduler::{Layout, Phase};
use blockguard::{SimConfig, SimOutput, Simulation};

/// Small network for invariant runs: 256 peers in 16 groups of 16 and
/// committee sizes 16..256.
pub fn small(layout: Layout, engine: EngineKind, seed: u64) -> SimConfig {
    let mut cfg = SimConfig {
        layout,
        engine,
        n: 256,
        rounds: 400,
        gsize: 16,
        win_size: 256,
        seed,
        event_level: EventLevel::Protocol,
        ..SimConfig::default()
    };
    cfg.sizing.base = 16;
    cfg
}

/// What a checked run saw, for callers that want to assert coverage.
#[derive(Debug, Default)]
pub struct Coverage {
    pub rounds: u32,
    pub committees: usize,
    pub stages: usize,
    pub max_concurrent: usize,
    pub swaps: usize,
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn defeated_oracle(engine: EngineKind, size: usize, byz: usize) -> bool {
    match engine {
        EngineKind::Pbft => 3 * byz >= size,
        EngineKind::Sbft | EngineKind::Pow => 2 * byz >= size,
    }
}

/// Steps a simulation to the end, checking the per-round invariants after
/// every round, then checks the end-of-run properties against the event
/// log. The config must log at least protocol events.
pub fn check_run(cfg: &SimConfig) -> Result<(SimOutput, Coverage), String> {
    ensure!(cfg.event_level != EventLevel::Off, "invariant runs need an event log");
    let mut sim = Simulation::new(cfg.clone()).map_err(|e| e.to_string())?;
    let n = cfg.n;
    let cap = sim.adversary().cap();
    let mut cov = Coverage::default();
    let mut recording_rounds: HashSet<u32> = HashSet::new();
    let mut windows: BTreeMap<u32, Vec<PeerId>> = BTreeMap::new();
    let mut ledger_len = sim.dynamic().map_or(0, |(d, _)| d.ledger().len());

    while !sim.is_finished() {
        let r = sim.round();
        let phase_before = sim.dynamic().map(|(_, p)| p);
        if let Some(Phase::Recording { .. }) = phase_before {
            recording_rounds.insert(r.0);
        }
        sim.step().map_err(|e| format!("round {r}: {e}"))?;

        let mut owner: Vec<Option<CommitteeId>> = vec![None; n];
        let mut seated = 0;
        let mut active = 0;
        for c in sim.active_committees() {
            active += 1;
            for (slot, m) in c.members.iter().enumerate() {
                ensure!(owner[m.index()].is_none(), "round {r}: peer {} in two committees", m.0);
                owner[m.index()] = Some(c.id);
                let peer = &sim.peers()[m.index()];
                ensure!(peer.assignment == Some(c.id), "round {r}: peer {} not marked as serving", m.0);
                ensure!(
                    peer.is_byzantine() == c.byzantine[slot],
                    "round {r}: honesty of peer {} changed while serving committee {}",
                    m.0,
                    c.id.0
                );
            }
            seated += c.size();
        }
        cov.max_concurrent = cov.max_concurrent.max(active);
        let busy = sim.peers().iter().filter(|p| p.assignment.is_some()).count();
        ensure!(busy == seated, "round {r}: {busy} peers marked busy, {seated} seated");
        ensure!(byzantine_count(sim.peers()) == cap, "round {r}: byzantine count left the cap {cap}");

        if let Some(s) = sim.composite() {
            let mut used: HashSet<u32> = HashSet::new();
            let mut in_use = 0;
            for c in sim.active_committees() {
                let mut expect: Vec<PeerId> = Vec::new();
                for g in &c.groups {
                    ensure!(used.insert(g.0), "round {r}: group {} shared", g.0);
                    expect.extend_from_slice(s.members(*g));
                }
                expect.sort_unstable();
                ensure!(expect == c.members, "round {r}: committee {} is not the union of its groups", c.id.0);
                in_use += c.groups.len();
            }
            for g in s.free_list() {
                ensure!(!used.contains(&g.0), "round {r}: group {} both free and in use", g.0);
            }
            ensure!(
                s.free_groups() + in_use == s.group_count(),
                "round {r}: {} free + {in_use} in use != {} groups",
                s.free_groups(),
                s.group_count()
            );
        }

        if let Some((d, phase)) = sim.dynamic() {
            match phase {
                Phase::Consensus => ensure!(active > 0, "round {r}: consensus stage without committees"),
                Phase::Idle | Phase::Recording { .. } => {
                    ensure!(active == 0, "round {r}: committees running outside the consensus stage")
                }
            }
            let len = d.ledger().len();
            if len != ledger_len {
                ensure!(
                    phase_before == Some(Phase::Recording { at: r }),
                    "round {r}: ledger grew outside a recording stage"
                );
                ensure!(validate_ledger(d.ledger()), "round {r}: ledger invalid after stage");
                windows.insert(d.ledger().last_stage(), d.window().to_vec());
                ledger_len = len;
            }
        }
    }

    let out = sim.finish();
    let events = out.events.events();
    cov.rounds = out.metrics.rounds;
    cov.committees = out.metrics.committees.len();
    cov.stages = windows.len();
    cov.swaps = out.swaps.len();
    check_log(&out, events, &recording_rounds)?;
    check_defeat_recount(&out, events)?;
    if cfg.layout == Layout::Dynamic {
        check_window_recency(&out, events, &windows)?;
    }
    Ok((out, cov))
}

fn members_from_log(events: &[Event]) -> HashMap<u32, Vec<PeerId>> {
    let mut members: HashMap<u32, Vec<PeerId>> = HashMap::new();
    for e in events.iter().filter(|e| e.kind == EventKind::Assign) {
        members.entry(e.committee.unwrap().0).or_default().push(e.sender.unwrap());
    }
    for m in members.values_mut() {
        m.sort_unstable();
    }
    members
}

fn check_log(out: &SimOutput, events: &[Event], recording_rounds: &HashSet<u32>) -> Result<(), String> {
    let m = &out.metrics;
    let cfg = &out.config;

    // FIFO: dispatched transactions are exactly the generated ones, in order
    let dispatched: Vec<u32> =
        events.iter().filter(|e| e.kind == EventKind::Dispatch).map(|e| e.txn.unwrap().0).collect();
    let generated: Vec<u32> =
        events.iter().filter(|e| e.kind == EventKind::Generate).map(|e| e.txn.unwrap().0).collect();
    ensure!(
        dispatched.iter().enumerate().all(|(i, &t)| t == generated[i]),
        "dispatch order is not a prefix of generation order"
    );

    // conservation
    let count = |s| m.txns.iter().filter(|t| t.status == s).count();
    ensure!(
        m.txns.len()
            == count(TxnStatus::Recorded)
                + count(TxnStatus::Discarded)
                + count(TxnStatus::Pending)
                + count(TxnStatus::Tentative),
        "transaction conservation violated"
    );
    let reliable = m.txns.iter().filter(|t| t.status == TxnStatus::Recorded && !t.defeated).count();
    ensure!(reliable <= m.txns.len(), "more reliable confirmations than generated transactions");

    // no message loss: only envelopes due after the cutoff remain
    ensure!(out.undelivered.iter().all(|r| r.0 >= cfg.rounds), "envelopes due before the cutoff were never delivered");

    // no consensus delivery during a recording stage
    ensure!(
        !events.iter().any(|e| e.kind == EventKind::Deliver && recording_rounds.contains(&e.round.0)),
        "consensus message delivered during a recording stage"
    );

    // restarts
    let restart_events = events.iter().filter(|e| e.kind == EventKind::Restart).count();
    let restarts: u32 = m.committees.iter().map(|c| c.restarts).sum();
    let open_restarts = events
        .iter()
        .filter(|e| e.kind == EventKind::Restart && m.committees[e.committee.unwrap().0 as usize].done_round.is_none())
        .count();
    ensure!(
        restarts as usize + open_restarts == restart_events,
        "restart count {restarts} (+{open_restarts} open) != {restart_events} restart events"
    );

    // ledgers
    for (i, l) in out.ledgers.iter().enumerate() {
        ensure!(validate_ledger(l), "ledger {i} invalid at end of run");
    }
    let mut places: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, l) in out.ledgers.iter().enumerate() {
        for b in l.blocks() {
            if let Some(t) = b.txn_id {
                places.entry(t.0).or_default().push(i);
            }
        }
    }
    let record_events: Vec<&Event> = events.iter().filter(|e| e.kind == EventKind::Record).collect();
    for t in &m.txns {
        let at = places.get(&t.id.0).cloned().unwrap_or_default();
        match (t.status, cfg.layout) {
            (TxnStatus::Recorded, Layout::Dynamic) => {
                ensure!(at.len() == 1, "txn {} appears {} times in the ledger", t.id.0, at.len())
            }
            (TxnStatus::Recorded, Layout::Composite) => {
                let mut groups: Vec<usize> =
                    record_events.iter().filter(|e| e.txn == Some(t.id)).map(|e| e.value.unwrap() as usize).collect();
                groups.sort_unstable();
                ensure!(!groups.is_empty(), "txn {} recorded without record events", t.id.0);
                ensure!(at == groups, "txn {} in ledgers {at:?}, committee groups {groups:?}", t.id.0);
            }
            _ => ensure!(at.is_empty(), "unrecorded txn {} found in a ledger", t.id.0),
        }
    }

    // recording happens `recording_rounds` after the last completion of the stage
    if cfg.layout == Layout::Dynamic {
        let mut complete_round: HashMap<u32, u32> = HashMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::Complete) {
            complete_round.insert(e.committee.unwrap().0, e.round.0);
        }
        for stage in events.iter().filter(|e| e.kind == EventKind::Stage) {
            let k = stage.value.unwrap();
            let last = record_events
                .iter()
                .filter(|e| e.value == Some(k))
                .map(|e| complete_round[&e.committee.unwrap().0])
                .max()
                .ok_or_else(|| format!("stage {k} has no records"))?;
            ensure!(
                stage.round.0 == last + cfg.recording_rounds,
                "stage {k} recorded at {} but last completion was {last}",
                stage.round
            );
        }
    }
    Ok(())
}

/// Honesty at each dispatch, replayed from the final state and the swap log.
fn check_defeat_recount(out: &SimOutput, events: &[Event]) -> Result<(), String> {
    let mut byz: Vec<bool> = out.peers.iter().map(|p| p.is_byzantine()).collect();
    for s in out.swaps.iter().rev() {
        for p in &s.became_byzantine {
            byz[p.index()] = false;
        }
        for p in &s.became_honest {
            byz[p.index()] = true;
        }
    }
    let cap = byz.iter().filter(|&&b| b).count();
    ensure!(
        cap == blockguard::adversary::byzantine_cap(out.config.n, out.config.byz_fraction),
        "replayed initial byzantine set has the wrong size"
    );
    // Dynamic adaptive runs shuffle inside the recording step, before forming
    // committees in the same round; everything else shuffles after dispatch.
    let shuffle_first = out.config.layout == Layout::Dynamic && out.config.fixed_size.is_none();
    let members = members_from_log(events);
    let mut next = 0;
    for rec in &out.metrics.committees {
        let d = rec.dispatch_round.0;
        while next < out.swaps.len() && (out.swaps[next].round.0 < d || (shuffle_first && out.swaps[next].round.0 == d))
        {
            for p in &out.swaps[next].became_byzantine {
                byz[p.index()] = true;
            }
            for p in &out.swaps[next].became_honest {
                byz[p.index()] = false;
            }
            next += 1;
        }
        let logged = members.get(&rec.id.0).ok_or_else(|| format!("committee {} has no assign events", rec.id.0))?;
        ensure!(*logged == rec.members, "committee {} membership differs from the log", rec.id.0);
        let count = logged.iter().filter(|p| byz[p.index()]).count();
        ensure!(
            count == rec.byz_count,
            "committee {}: replayed {count} byzantine, recorded {}",
            rec.id.0,
            rec.byz_count
        );
        ensure!(
            defeated_oracle(rec.engine, rec.size, count) == rec.classified_defeated,
            "committee {} misclassified",
            rec.id.0
        );
        if rec.engine != EngineKind::Pow && rec.done_round.is_some() {
            ensure!(rec.defeated == rec.classified_defeated, "committee {} outcome differs from class", rec.id.0);
        }

        // stability: no swap touches a member while the committee runs
        let end = rec.done_round.map_or(u32::MAX, |r| r.0);
        for s in &out.swaps {
            let during =
                if shuffle_first { s.round.0 > d && s.round.0 < end } else { s.round.0 >= d && s.round.0 < end };
            if during {
                ensure!(
                    !s.became_byzantine.iter().chain(&s.became_honest).any(|p| logged.binary_search(p).is_ok()),
                    "swap at round {} touched a member of committee {}",
                    s.round,
                    rec.id.0
                );
            }
        }
    }
    Ok(())
}

/// Recomputes the selection window after every stage from the log alone.
fn check_window_recency(out: &SimOutput, events: &[Event], windows: &BTreeMap<u32, Vec<PeerId>>) -> Result<(), String> {
    let members = members_from_log(events);
    let mut stages: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == EventKind::Record) {
        stages.entry(e.value.unwrap()).or_default().push(e.committee.unwrap().0);
    }
    let n = out.config.n;
    let win = out.config.win_size;
    for (&k, window) in windows {
        let mut seen = vec![false; n];
        let mut expect = Vec::with_capacity(win);
        'outer: for (_, committees) in stages.range(..=u64::from(k)).rev() {
            let mut ids = committees.clone();
            ids.sort_unstable();
            for id in ids {
                for p in &members[&id] {
                    if expect.len() == win {
                        break 'outer;
                    }
                    if !seen[p.index()] {
                        seen[p.index()] = true;
                        expect.push(*p);
                    }
                }
            }
        }
        let unseen = (0..n).filter(|&i| !seen[i]).map(|i| PeerId(i as u32));
        let room = win - expect.len();
        expect.extend(unseen.take(room));
        ensure!(*window == expect, "window after stage {k} does not match the log");
    }
    Ok(())
}

/// Throughput, average wait and defeated ratio folded from the event log.
pub fn fold_metrics(events: &[Event], rounds: u32) -> (f64, Option<f64>, Option<f64>) {
    let mut gen: HashMap<u32, u32> = HashMap::new();
    let mut confirm: HashMap<u32, (u32, bool)> = HashMap::new();
    let mut recorded: HashSet<u32> = HashSet::new();
    let mut completed = 0usize;
    let mut defeated = 0usize;
    for e in events {
        match e.kind {
            EventKind::Generate => {
                gen.insert(e.txn.unwrap().0, e.round.0);
            }
            EventKind::Confirm => {
                confirm.entry(e.txn.unwrap().0).or_insert((e.round.0, e.value == Some(1)));
            }
            EventKind::Record => {
                recorded.insert(e.txn.unwrap().0);
            }
            EventKind::Complete => {
                completed += 1;
                defeated += usize::from(e.value == Some(1));
            }
            _ => {}
        }
    }
    // a committee that completes also confirmed; confirmations without a
    // completion leave the transaction unconfirmed in the metrics
    let done: HashSet<u32> =
        events.iter().filter(|e| e.kind == EventKind::Complete).map(|e| e.txn.unwrap().0).collect();
    let good = recorded.iter().filter(|t| confirm.get(t).is_some_and(|c| !c.1)).count();
    let waits: Vec<u32> = confirm.iter().filter(|(t, _)| done.contains(t)).map(|(t, c)| c.0 - gen[t]).collect();
    let avg = (!waits.is_empty()).then(|| waits.iter().map(|&w| f64::from(w)).sum::<f64>() / waits.len() as f64);
    let ratio = (completed > 0).then(|| defeated as f64 / completed as f64);
    (good as f64 / f64::from(rounds), avg, ratio)
}

pub fn rounds_of(m: &MetricsLog) -> u32 {
    m.rounds
}

pub fn round(r: u32) -> Round {
    Round(r)
}
