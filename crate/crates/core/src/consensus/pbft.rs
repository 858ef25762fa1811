use super::{Broadcast, EngineCtx, EngineEvent, EngineStats, Protocol, VoteMatrix};
use crate::model::Committee;
use crate::net::{MsgKind, Round};

/// PBFT at round granularity.
///
/// The leader's pre-prepare doubles as its prepare vote. A member that holds
/// the pre-prepare and `2f + 1` prepares broadcasts a commit; `2f + 1`
/// commits confirm. The committee completes at the first confirmation. A
/// silent leader is replaced `timeout` rounds after its view began.
#[derive(Debug, Clone)]
pub struct PbftState {
    start: Round,
    quorum: u32,
    timeout: u32,
    view: u32,
    view_start: Round,
    leader_acted: bool,
    pre_prepared: Vec<bool>,
    sent_prepare: Vec<bool>,
    sent_commit: Vec<bool>,
    prepares: Vec<u32>,
    commits: Vec<u32>,
    prepare_seen: VoteMatrix,
    commit_seen: VoteMatrix,
    react: Vec<usize>,
    queued: Vec<bool>,
    first_confirm: Option<Round>,
    view_changes: u32,
    done: bool,
}

impl PbftState {
    pub fn new(n: usize, start: Round, timeout: u32) -> Self {
        let f = (n as u32 - 1) / 3;
        PbftState {
            start,
            quorum: 2 * f + 1,
            timeout,
            view: 0,
            view_start: start,
            leader_acted: false,
            pre_prepared: vec![false; n],
            sent_prepare: vec![false; n],
            sent_commit: vec![false; n],
            prepares: vec![0; n],
            commits: vec![0; n],
            prepare_seen: VoteMatrix::new(n),
            commit_seen: VoteMatrix::new(n),
            react: Vec::new(),
            queued: vec![false; n],
            first_confirm: None,
            view_changes: 0,
            done: false,
        }
    }

    pub fn view(&self) -> u32 {
        self.view
    }

    pub fn quorum(&self) -> u32 {
        self.quorum
    }

    fn enqueue(&mut self, slot: usize) {
        if !self.queued[slot] {
            self.queued[slot] = true;
            self.react.push(slot);
        }
    }

    fn add_prepare(&mut self, to: usize, from: usize) -> bool {
        if self.prepare_seen.insert(to, from) {
            self.prepares[to] += 1;
            self.prepares[to] == self.quorum
        } else {
            false
        }
    }

    fn add_commit(&mut self, to: usize, from: usize) -> bool {
        if self.commit_seen.insert(to, from) {
            self.commits[to] += 1;
            self.commits[to] == self.quorum
        } else {
            false
        }
    }

    fn reset_view(&mut self, view: u32, start: Round) {
        self.view = view;
        self.view_start = start;
        self.leader_acted = false;
        for v in [&mut self.pre_prepared, &mut self.sent_prepare, &mut self.sent_commit] {
            v.iter_mut().for_each(|x| *x = false);
        }
        self.prepares.iter_mut().for_each(|x| *x = 0);
        self.commits.iter_mut().for_each(|x| *x = 0);
        self.prepare_seen.clear();
        self.commit_seen.clear();
        for s in self.react.drain(..) {
            self.queued[s] = false;
        }
    }

    fn leader_step(&mut self, ctx: &mut EngineCtx<'_>) {
        let leader = ctx.committee.leader_slot(self.view);
        self.leader_acted = true;
        if ctx.committee.participates(leader) {
            ctx.outbox.push(Broadcast { from: leader, kind: MsgKind::PrePrepare, view: self.view });
            self.pre_prepared[leader] = true;
            self.add_prepare(leader, leader);
            self.enqueue(leader);
        }
    }
}

impl Protocol for PbftState {
    fn on_message(&mut self, committee: &Committee, from: usize, to: usize, kind: MsgKind, view: u32) {
        if self.done || view != self.view || from >= committee.size() || to >= committee.size() {
            return;
        }
        match kind {
            MsgKind::PrePrepare => {
                if from == committee.leader_slot(view) && !self.pre_prepared[to] {
                    self.pre_prepared[to] = true;
                    self.add_prepare(to, from);
                    self.enqueue(to);
                }
            }
            MsgKind::Prepare => {
                if self.add_prepare(to, from) {
                    self.enqueue(to);
                }
            }
            MsgKind::Commit => {
                if self.add_commit(to, from) {
                    self.enqueue(to);
                }
            }
            MsgKind::Propose | MsgKind::Notify => {}
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
        if self.done || view != self.view || from >= committee.size() {
            return;
        }
        let n = committee.size();
        match kind {
            MsgKind::Prepare => {
                for t in to.into_iter().filter(|&t| t < n) {
                    if self.add_prepare(t, from) {
                        self.enqueue(t);
                    }
                }
            }
            MsgKind::Commit => {
                for t in to.into_iter().filter(|&t| t < n) {
                    if self.add_commit(t, from) {
                        self.enqueue(t);
                    }
                }
            }
            _ => {
                for t in to {
                    self.on_message(committee, from, t, kind, view);
                }
            }
        }
    }

    fn on_round(&mut self, ctx: &mut EngineCtx<'_>) {
        let r = ctx.round;
        if self.done || r < self.start {
            return;
        }
        if r == self.start && self.view == 0 && !self.leader_acted {
            ctx.events.push(EngineEvent::Started);
        }
        if !self.leader_acted && r >= self.view_start {
            self.leader_step(ctx);
        }
        let leader = ctx.committee.leader_slot(self.view);
        if !ctx.committee.participates(leader) && r == self.view_start.plus(self.timeout) {
            self.view_changes += 1;
            self.reset_view(self.view + 1, r);
            ctx.events.push(EngineEvent::ViewChange { view: self.view });
            self.leader_step(ctx);
        }

        let mut react = std::mem::take(&mut self.react);
        react.sort_unstable();
        for &slot in &react {
            self.queued[slot] = false;
        }
        let leader = ctx.committee.leader_slot(self.view);
        for slot in react.drain(..) {
            if !ctx.committee.participates(slot) || !self.pre_prepared[slot] {
                continue;
            }
            if !self.sent_prepare[slot] && slot != leader {
                self.sent_prepare[slot] = true;
                ctx.outbox.push(Broadcast { from: slot, kind: MsgKind::Prepare, view: self.view });
                self.add_prepare(slot, slot);
            }
            if !self.sent_commit[slot] && self.prepares[slot] >= self.quorum {
                self.sent_commit[slot] = true;
                ctx.outbox.push(Broadcast { from: slot, kind: MsgKind::Commit, view: self.view });
                self.add_commit(slot, slot);
            }
            if self.commits[slot] >= self.quorum {
                self.first_confirm = Some(r);
                self.done = true;
                ctx.events.push(EngineEvent::Confirmed);
                ctx.events.push(EngineEvent::Completed { defeated: ctx.committee.defeated });
                break;
            }
        }
        self.react = react;
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn confirm_round(&self) -> Option<Round> {
        self.first_confirm
    }

    fn stats(&self) -> EngineStats {
        EngineStats { view_changes: self.view_changes, restarts: 0 }
    }
}
