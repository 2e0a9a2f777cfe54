//! Failure injection: independent per-visit loss, scheduled burst kills, and
//! a single Byzantine node that absorbs every arriving walk while hostile.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::WalkToken;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByzMode {
    Byz,
    NoByz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    pub t: i64,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByzantineCfg {
    pub node: u32,
    pub p_transit: f64,
    pub initial_state: ByzMode,
    /// Scripted state switches (step, state); at a scripted step the Markov
    /// transition is skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_override: Option<Vec<(i64, ByzMode)>>,
}

impl ByzantineCfg {
    pub fn override_at(&self, t: i64) -> Option<ByzMode> {
        self.schedule_override
            .as_ref()
            .and_then(|s| s.iter().find(|&&(at, _)| at == t).map(|&(_, m)| m))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailurePlan {
    #[serde(default)]
    pub bursts: Vec<Burst>,
    #[serde(default)]
    pub p_fail: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byzantine: Option<ByzantineCfg>,
}

#[derive(Clone, Copy, Debug)]
pub struct ByzantineState {
    pub current: ByzMode,
}

#[derive(Debug, Error, PartialEq)]
pub enum FailureError {
    #[error("p_fail must be in [0, 1), got {0}")]
    BadPfail(f64),
    #[error("burst times must be strictly increasing")]
    BurstOrder,
    #[error("burst count must be >= 1")]
    BurstCount,
    #[error("p_transit must be in [0, 1], got {0}")]
    BadPtransit(f64),
}

impl FailurePlan {
    pub fn validate(&self) -> Result<(), FailureError> {
        if !(0.0..1.0).contains(&self.p_fail) {
            return Err(FailureError::BadPfail(self.p_fail));
        }
        for pair in self.bursts.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(FailureError::BurstOrder);
            }
        }
        if self.bursts.iter().any(|b| b.count < 1) {
            return Err(FailureError::BurstCount);
        }
        if let Some(byz) = &self.byzantine {
            if !(0.0..=1.0).contains(&byz.p_transit) {
                return Err(FailureError::BadPtransit(byz.p_transit));
            }
        }
        Ok(())
    }
}

/// Kills each active walk independently with probability `p_fail`; returns
/// the indices of the victims.
pub fn apply_probabilistic<R: Rng + ?Sized>(
    walks: &mut [WalkToken],
    p_fail: f64,
    t: i64,
    rng: &mut R,
) -> Vec<usize> {
    debug_assert!((0.0..1.0).contains(&p_fail));
    let mut killed = Vec::new();
    for (idx, w) in walks.iter_mut().enumerate() {
        if w.active && rng.random::<f64>() < p_fail {
            w.kill(t);
            killed.push(idx);
        }
    }
    killed
}

/// Kills min(count, #active) walks chosen uniformly without replacement.
pub fn apply_burst<R: Rng + ?Sized>(
    walks: &mut [WalkToken],
    count: u32,
    t: i64,
    rng: &mut R,
) -> Vec<usize> {
    let mut active: Vec<usize> = walks
        .iter()
        .enumerate()
        .filter(|(_, w)| w.active)
        .map(|(i, _)| i)
        .collect();
    let k = (count as usize).min(active.len());
    // partial Fisher-Yates: the first k entries become the victims
    for i in 0..k {
        let j = rng.random_range(i..active.len());
        active.swap(i, j);
    }
    active.truncate(k);
    for &idx in &active {
        walks[idx].kill(t);
    }
    active
}

/// One Markov transition of the two-state Byzantine chain.
pub fn byzantine_step<R: Rng + ?Sized>(byz: &mut ByzantineState, p_transit: f64, rng: &mut R) {
    if rng.random::<f64>() < p_transit {
        byz.current = match byz.current {
            ByzMode::Byz => ByzMode::NoByz,
            ByzMode::NoByz => ByzMode::Byz,
        };
    }
}

/// Kills every active walk currently positioned at the Byzantine node. Must
/// run before visit bookkeeping: absorbed walks leave no trace at the node.
pub fn absorb_at_byzantine(walks: &mut [WalkToken], node: u32, t: i64) -> Vec<usize> {
    let mut killed = Vec::new();
    for (idx, w) in walks.iter_mut().enumerate() {
        if w.active && w.position == node {
            w.kill(t);
            killed.push(idx);
        }
    }
    killed
}
