//! Byzantine identity assignment and peer shuffling.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Honesty, Peer, PeerId};
use crate::net::Round;
use crate::rng::SimRng;

/// Global Byzantine cap: `floor(fraction * n)`.
pub fn byzantine_cap(n: usize, fraction: f64) -> usize {
    // the epsilon absorbs representation error such as 0.29 * 100 = 28.99..
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Uniformly random Byzantine subset of size `floor(fraction * n)`, sorted.
pub fn assign_initial(n: usize, fraction: f64, rng: &mut SimRng) -> Result<Vec<PeerId>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config(format!("byzantine fraction {fraction} outside [0, 1)")));
    }
    let cap = byzantine_cap(n, fraction);
    let mut set: Vec<PeerId> = index::sample(rng, n, cap).into_iter().map(|i| PeerId(i as u32)).collect();
    set.sort_unstable();
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SwapRecord {
    pub round: Round,
    pub became_byzantine: Vec<PeerId>,
    pub became_honest: Vec<PeerId>,
}

#[derive(Debug)]
pub struct Adversary {
    fraction: f64,
    cap: usize,
    rng: SimRng,
    swaps: Vec<SwapRecord>,
}

impl Adversary {
    /// Corrupts the initial Byzantine set in `peers`.
    pub fn new(peers: &mut [Peer], fraction: f64, mut rng: SimRng) -> Result<Self> {
        let initial = assign_initial(peers.len(), fraction, &mut rng)?;
        for p in peers.iter_mut() {
            p.honesty = Honesty::Honest;
        }
        for id in &initial {
            peers[id.index()].honesty = Honesty::Byzantine;
        }
        Ok(Adversary { fraction, cap: initial.len(), rng, swaps: Vec::new() })
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn swap_log(&self) -> &[SwapRecord] {
        &self.swaps
    }

    pub fn into_swap_log(self) -> Vec<SwapRecord> {
        self.swaps
    }

    /// Swaps `k ~ U{0..=m}` idle Byzantine peers with as many idle honest
    /// peers, where `m` is the smaller of the two idle populations. Peers
    /// assigned to a committee are never touched. Empty swaps are not
    /// logged.
    pub fn shuffle(&mut self, peers: &mut [Peer], round: Round) -> usize {
        let (idle_byz, idle_honest): (Vec<usize>, Vec<usize>) = {
            let mut b = Vec::new();
            let mut h = Vec::new();
            for (i, p) in peers.iter().enumerate() {
                if p.is_idle() {
                    if p.is_byzantine() {
                        b.push(i);
                    } else {
                        h.push(i);
                    }
                }
            }
            (b, h)
        };
        let max = idle_byz.len().min(idle_honest.len());
        let k = self.rng.random_range(0..=max);
        if k == 0 {
            return 0;
        }
        let mut became_honest: Vec<PeerId> =
            index::sample(&mut self.rng, idle_byz.len(), k).into_iter().map(|i| PeerId(idle_byz[i] as u32)).collect();
        let mut became_byzantine: Vec<PeerId> = index::sample(&mut self.rng, idle_honest.len(), k)
            .into_iter()
            .map(|i| PeerId(idle_honest[i] as u32))
            .collect();
        became_honest.sort_unstable();
        became_byzantine.sort_unstable();
        for id in &became_honest {
            peers[id.index()].honesty = Honesty::Honest;
        }
        for id in &became_byzantine {
            peers[id.index()].honesty = Honesty::Byzantine;
        }
        self.swaps.push(SwapRecord { round, became_byzantine, became_honest });
        k
    }
}

pub fn byzantine_count(peers: &[Peer]) -> usize {
    peers.iter().filter(|p| p.is_byzantine()).count()
}
