use super::{Broadcast, EngineCtx, EngineEvent, EngineStats, Protocol, VoteMatrix};
use crate::model::Committee;
use crate::net::{MsgKind, Round};

/// Synchronous BFT in lock-step windows of `max_delay` rounds.
///
/// A view starting at `t` runs three windows: the leader's proposal
/// (`t`), commits from every member holding the proposal (`t + d`), and
/// confirmation with notification for members holding `f + 1` commits
/// (`t + 2d`). At `t + 3d` the committee terminates if every participating
/// member confirmed; otherwise the next view starts `timeout` rounds later.
/// Members always wait out the full window, so latency depends only on `d`
/// and on how many leaders fail, never on the realised delays.
#[derive(Debug, Clone)]
pub struct SbftState {
    start: Round,
    window: u32,
    timeout: u32,
    quorum: u32,
    view: u32,
    view_start: Round,
    next_view: Option<Round>,
    has_proposal: Vec<bool>,
    commits: Vec<u32>,
    commit_seen: VoteMatrix,
    confirmed: Vec<bool>,
    notifications: Vec<u32>,
    first_confirm: Option<Round>,
    view_changes: u32,
    done: bool,
}

impl SbftState {
    pub fn new(n: usize, start: Round, max_delay: u32, timeout: u32) -> Self {
        let f = (n as u32 - 1) / 2;
        SbftState {
            start,
            window: max_delay,
            timeout,
            quorum: f + 1,
            view: 0,
            view_start: start,
            next_view: None,
            has_proposal: vec![false; n],
            commits: vec![0; n],
            commit_seen: VoteMatrix::new(n),
            confirmed: vec![false; n],
            notifications: vec![0; n],
            first_confirm: None,
            view_changes: 0,
            done: false,
        }
    }

    pub fn view(&self) -> u32 {
        self.view
    }

    fn reset_view(&mut self, view: u32, start: Round) {
        self.view = view;
        self.view_start = start;
        self.has_proposal.iter_mut().for_each(|x| *x = false);
        self.commits.iter_mut().for_each(|x| *x = 0);
        self.confirmed.iter_mut().for_each(|x| *x = false);
        self.notifications.iter_mut().for_each(|x| *x = 0);
        self.commit_seen.clear();
    }
}

impl Protocol for SbftState {
    fn on_message(&mut self, committee: &Committee, from: usize, to: usize, kind: MsgKind, view: u32) {
        if self.done || view != self.view || from >= committee.size() || to >= committee.size() {
            return;
        }
        match kind {
            MsgKind::Propose if from == committee.leader_slot(view) => self.has_proposal[to] = true,
            MsgKind::Commit => {
                if self.commit_seen.insert(to, from) {
                    self.commits[to] += 1;
                }
            }
            MsgKind::Notify => self.notifications[to] += 1,
            _ => {}
        }
    }

    fn on_round(&mut self, ctx: &mut EngineCtx<'_>) {
        let r = ctx.round;
        if self.done || r < self.start {
            return;
        }
        let c = ctx.committee;
        if r == self.start && self.view == 0 {
            ctx.events.push(EngineEvent::Started);
        }
        if self.next_view == Some(r) {
            self.next_view = None;
            self.view_changes += 1;
            self.reset_view(self.view + 1, r);
            ctx.events.push(EngineEvent::ViewChange { view: self.view });
        }
        let d = self.window;
        let t = self.view_start;
        if r == t {
            let leader = c.leader_slot(self.view);
            if c.participates(leader) {
                self.has_proposal[leader] = true;
                ctx.outbox.push(Broadcast { from: leader, kind: MsgKind::Propose, view: self.view });
            }
        } else if r == t.plus(d) {
            for slot in 0..c.size() {
                if c.participates(slot) && self.has_proposal[slot] {
                    ctx.outbox.push(Broadcast { from: slot, kind: MsgKind::Commit, view: self.view });
                    if self.commit_seen.insert(slot, slot) {
                        self.commits[slot] += 1;
                    }
                }
            }
        } else if r == t.plus(2 * d) {
            for slot in 0..c.size() {
                if c.participates(slot) && self.commits[slot] >= self.quorum {
                    self.confirmed[slot] = true;
                    if self.first_confirm.is_none() {
                        self.first_confirm = Some(r);
                        ctx.events.push(EngineEvent::Confirmed);
                    }
                    ctx.outbox.push(Broadcast { from: slot, kind: MsgKind::Notify, view: self.view });
                }
            }
        } else if r == t.plus(3 * d) {
            let all = (0..c.size()).all(|s| !c.participates(s) || self.confirmed[s]);
            if all {
                self.done = true;
                ctx.events.push(EngineEvent::Completed { defeated: c.defeated });
            } else {
                self.next_view = Some(r.plus(self.timeout));
            }
        }
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
