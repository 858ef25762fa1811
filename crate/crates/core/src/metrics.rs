//! Run records and the metrics derived from them.

use serde::{Deserialize, Serialize};

use crate::consensus::EngineKind;
use crate::error::{Error, Result};
use crate::model::{CommitteeId, PeerId, Transaction, TxnId, TxnStatus};
use crate::net::Round;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommitteeRecord {
    pub id: CommitteeId,
    pub txn: TxnId,
    pub level: u8,
    pub size: usize,
    pub engine: EngineKind,
    pub byz_count: usize,
    /// Byzantine share reached the engine's resiliency threshold.
    pub classified_defeated: bool,
    /// The committee's transaction counts as defeated. Differs from the
    /// classification only for PoW, where an honest winner in a defeated
    /// committee still yields a reliable transaction.
    pub defeated: bool,
    pub view_changes: u32,
    pub restarts: u32,
    pub dispatch_round: Round,
    pub confirm_round: Option<Round>,
    pub done_round: Option<Round>,
    pub members: Vec<PeerId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundCounters {
    pub generated: u32,
    pub dispatched: u32,
    pub confirmed: u32,
    pub active_committees: u32,
    pub queue_len: u32,
    pub free_capacity: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rounds: u32,
    pub txns: Vec<Transaction>,
    pub committees: Vec<CommitteeRecord>,
    pub per_round: Vec<RoundCounters>,
}

impl MetricsLog {
    fn reliable(t: &Transaction) -> bool {
        t.status == TxnStatus::Recorded && !t.defeated
    }

    pub fn count_status(&self, status: TxnStatus) -> usize {
        self.txns.iter().filter(|t| t.status == status).count()
    }

    /// Generated transactions with no confirmation at the end of the run.
    pub fn backlog(&self) -> usize {
        self.txns.iter().filter(|t| t.confirm_round.is_none()).count()
    }
}

/// Reliable recorded transactions per round of computation.
pub fn throughput(log: &MetricsLog, total_rounds: u32) -> Result<f64> {
    if total_rounds == 0 {
        return Err(Error::UndefinedMetric("throughput over zero rounds"));
    }
    let ok = log.txns.iter().filter(|t| MetricsLog::reliable(t)).count();
    Ok(ok as f64 / f64::from(total_rounds))
}

/// Mean rounds from generation to first confirmation, defeated included.
pub fn avg_waiting_time(log: &MetricsLog) -> Result<f64> {
    let waits: Vec<u32> = log.txns.iter().filter_map(|t| t.confirm_round.map(|c| c.since(t.gen_round))).collect();
    if waits.is_empty() {
        return Err(Error::UndefinedMetric("no confirmed transactions"));
    }
    Ok(waits.iter().map(|&w| f64::from(w)).sum::<f64>() / waits.len() as f64)
}

/// Completed committees whose transaction counts as defeated, over all
/// completed committees.
pub fn defeated_ratio(log: &MetricsLog) -> Result<f64> {
    let done: Vec<&CommitteeRecord> = log.committees.iter().filter(|c| c.done_round.is_some()).collect();
    if done.is_empty() {
        return Err(Error::UndefinedMetric("no completed committees"));
    }
    Ok(done.iter().filter(|c| c.defeated).count() as f64 / done.len() as f64)
}

/// Per-level defeated ratio; `None` for levels without completed committees.
pub fn defeated_ratio_by_level(log: &MetricsLog, levels: u8) -> Vec<Option<f64>> {
    (1..=levels)
        .map(|l| {
            let (mut total, mut bad) = (0usize, 0usize);
            for c in log.committees.iter().filter(|c| c.level == l && c.done_round.is_some()) {
                total += 1;
                bad += usize::from(c.defeated);
            }
            (total > 0).then(|| bad as f64 / total as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TimelinePoint {
    pub round: u32,
    pub rolling_throughput: f64,
    /// `None` when nothing was confirmed inside the window.
    pub rolling_wait: Option<f64>,
}

/// Sliding-window metrics over transactions confirmed in `(r - window, r]`,
/// for every round `window <= r < log.rounds`.
pub fn rolling_timeline(log: &MetricsLog, window: u32) -> Vec<TimelinePoint> {
    if window == 0 || log.rounds <= window {
        return Vec::new();
    }
    let n = log.rounds as usize;
    let mut reliable = vec![0u64; n];
    let mut confirmed = vec![0u64; n];
    let mut wait_sum = vec![0u64; n];
    for t in &log.txns {
        if let Some(c) = t.confirm_round {
            let i = c.0 as usize;
            if i >= n {
                continue;
            }
            confirmed[i] += 1;
            wait_sum[i] += u64::from(c.since(t.gen_round));
            if !t.defeated {
                reliable[i] += 1;
            }
        }
    }
    let prefix = |v: &[u64]| -> Vec<u64> {
        let mut out = Vec::with_capacity(v.len() + 1);
        out.push(0);
        for x in v {
            out.push(out.last().unwrap() + x);
        }
        out
    };
    let (pr, pc, pw) = (prefix(&reliable), prefix(&confirmed), prefix(&wait_sum));
    let w = window as usize;
    (w..n)
        .map(|r| {
            let (lo, hi) = (r + 1 - w, r + 1);
            let count = pc[hi] - pc[lo];
            TimelinePoint {
                round: r as u32,
                rolling_throughput: (pr[hi] - pr[lo]) as f64 / window as f64,
                rolling_wait: (count > 0).then(|| (pw[hi] - pw[lo]) as f64 / count as f64),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SecurityLevel;

    fn txn(id: u32, gen: u32, confirm: Option<u32>, defeated: bool) -> Transaction {
        let mut t = Transaction::new(TxnId(id), SecurityLevel::new(1, 5).unwrap(), PeerId(0), Round(gen));
        if let Some(c) = confirm {
            t.mark_dispatched(Round(gen));
            t.mark_confirmed(Round(c), defeated);
            t.mark_recorded(Round(c));
        }
        t
    }

    fn committee(level: u8, defeated: bool) -> CommitteeRecord {
        CommitteeRecord {
            id: CommitteeId(0),
            txn: TxnId(0),
            level,
            size: 64,
            engine: EngineKind::Pbft,
            byz_count: 0,
            classified_defeated: defeated,
            defeated,
            view_changes: 0,
            restarts: 0,
            dispatch_round: Round(0),
            confirm_round: Some(Round(1)),
            done_round: Some(Round(1)),
            members: Vec::new(),
        }
    }

    #[test]
    fn half_throughput() {
        let log = MetricsLog {
            rounds: 1000,
            txns: (0..500).map(|i| txn(i, 2 * i, Some(2 * i + 1), false)).collect(),
            ..Default::default()
        };
        assert_eq!(throughput(&log, 1000).unwrap(), 0.5);
        assert!(throughput(&log, 0).is_err());
    }

    #[test]
    fn defeated_not_counted_in_throughput() {
        let log = MetricsLog { rounds: 10, txns: vec![txn(0, 0, Some(3), true)], ..Default::default() };
        assert_eq!(throughput(&log, 10).unwrap(), 0.0);
    }

    #[test]
    fn waiting_time_includes_defeated_and_skips_backlog() {
        let log = MetricsLog {
            rounds: 100,
            txns: vec![txn(0, 0, Some(10), false), txn(1, 0, Some(20), true), txn(2, 5, None, false)],
            ..Default::default()
        };
        assert_eq!(avg_waiting_time(&log).unwrap(), 15.0);
        assert_eq!(log.backlog(), 1);
        assert!(avg_waiting_time(&MetricsLog::default()).is_err());
    }

    #[test]
    fn defeated_ratios() {
        let log = MetricsLog {
            committees: vec![committee(1, true), committee(1, false), committee(2, false), committee(1, false)],
            ..Default::default()
        };
        assert_eq!(defeated_ratio(&log).unwrap(), 0.25);
        let by = defeated_ratio_by_level(&log, 3);
        assert!((by[0].unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(by[1], Some(0.0));
        assert_eq!(by[2], None);
        assert!(defeated_ratio(&MetricsLog::default()).is_err());
    }

    #[test]
    fn steady_confirmations_give_flat_timeline() {
        let log = MetricsLog {
            rounds: 1000,
            txns: (0..500).map(|i| txn(i, 2 * i, Some(2 * i + 1), false)).collect(),
            ..Default::default()
        };
        let tl = rolling_timeline(&log, 200);
        assert_eq!(tl.len(), 800);
        for p in &tl {
            assert_eq!(p.rolling_throughput, 0.5);
            assert_eq!(p.rolling_wait, Some(1.0));
        }
    }

    #[test]
    fn short_run_gives_empty_timeline() {
        let log = MetricsLog { rounds: 150, ..Default::default() };
        assert!(rolling_timeline(&log, 200).is_empty());
    }
}
