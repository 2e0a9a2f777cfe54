//! The three decentralized control policies and the shared survival-function
//! estimator.
//!
//! All policies are pure functions of the node's local state plus an explicit
//! RNG stream. A node estimates the number of currently active walks as
//! `offset + sum of survival probabilities` over every other walk it has ever
//! seen, then forks below `gamma` (and, for the extended policy, terminates
//! above `gamma_term`) with probability `fork_prob` per decision.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{NodeState, WalkId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    None,
    MissingPerson,
    Decafork,
    DecaforkPlus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SurvivalMode {
    EmpiricalPooled,
    /// Exponential tail e^(−λ·elapsed). `lambda: None` means "fit from
    /// warmup"; the engine fills it in before the first decision.
    AnalyticalExponential { lambda: Option<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum OffsetMode {
    Half,
    /// (1−q)/(2−q): corrects the 1/2 offset for the geometric (discrete)
    /// return law with per-step revisit probability q.
    GeometricCorrected { q: f64 },
}

impl OffsetMode {
    pub fn offset(self) -> f64 {
        match self {
            OffsetMode::Half => 0.5,
            OffsetMode::GeometricCorrected { q } => (1.0 - q) / (2.0 - q),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub z0: u32,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_term: Option<f64>,
    /// MissingPerson staleness threshold; None selects the empirical
    /// (1 − 0.01/z0) quantile of the deciding node's pooled samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_mp: Option<u32>,
    /// Per-decision fork/terminate probability; defaults to 1/z0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fork_prob: Option<f64>,
    #[serde(default = "default_survival_mode")]
    pub survival_mode: SurvivalMode,
    #[serde(default = "default_offset_mode")]
    pub offset_mode: OffsetMode,
}

fn default_survival_mode() -> SurvivalMode {
    SurvivalMode::EmpiricalPooled
}

fn default_offset_mode() -> OffsetMode {
    OffsetMode::Half
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("fork_prob must be in (0, 1], got {0}")]
    BadForkProb(f64),
    #[error("gamma must exceed 1/2, got {0}")]
    BadGamma(f64),
    #[error("gamma_term ({got}) must exceed gamma ({gamma})")]
    BadGammaTerm { got: f64, gamma: f64 },
    #[error("t_mp must be >= 2, got {0}")]
    BadTmp(u32),
    #[error("z0 must be >= 1")]
    BadZ0,
    #[error("analytical lambda must be positive, got {0}")]
    BadLambda(f64),
}

impl PolicyConfig {
    pub fn fork_prob(&self) -> f64 {
        self.fork_prob.unwrap_or(1.0 / self.z0 as f64)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.z0 < 1 {
            return Err(PolicyError::BadZ0);
        }
        let p = self.fork_prob();
        if !(p > 0.0 && p <= 1.0) {
            return Err(PolicyError::BadForkProb(p));
        }
        if self.kind == PolicyKind::Decafork || self.kind == PolicyKind::DecaforkPlus {
            if !(self.gamma > 0.5) {
                return Err(PolicyError::BadGamma(self.gamma));
            }
        }
        if self.kind == PolicyKind::DecaforkPlus {
            let gt = self.gamma_term.unwrap_or(f64::NEG_INFINITY);
            if !(gt > self.gamma) {
                return Err(PolicyError::BadGammaTerm { got: gt, gamma: self.gamma });
            }
        }
        if self.kind == PolicyKind::MissingPerson {
            if let Some(t_mp) = self.t_mp {
                if t_mp < 2 {
                    return Err(PolicyError::BadTmp(t_mp));
                }
            }
        }
        if let SurvivalMode::AnalyticalExponential { lambda: Some(l) } = self.survival_mode {
            if !(l > 0.0) {
                return Err(PolicyError::BadLambda(l));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    None,
    Fork,
    Terminate,
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub action: Action,
    pub estimate: Option<f64>,
    pub replace_ids: Vec<WalkId>,
}

impl Decision {
    fn none() -> Self {
        Decision { action: Action::None, estimate: None, replace_ids: Vec::new() }
    }
}

/// Probability that a walk last seen `elapsed` steps ago is still alive,
/// according to the configured survival model.
pub fn survival(state: &NodeState, elapsed: f64, cfg: &PolicyConfig) -> f64 {
    debug_assert!(elapsed >= 0.0);
    match cfg.survival_mode {
        SurvivalMode::EmpiricalPooled => state.samples.survival_fraction(elapsed),
        SurvivalMode::AnalyticalExponential { lambda } => {
            let lambda = lambda.expect("analytical lambda resolved before decisions");
            (-lambda * elapsed).exp()
        }
    }
}

/// Local estimate of half the number of active walks:
/// offset + Σ over known walks other than the visitor of their survival.
pub fn estimate(state: &NodeState, visiting_id: &WalkId, t: i64, cfg: &PolicyConfig) -> f64 {
    debug_assert!(state.last_seen.contains_key(visiting_id));
    let mut z_hat = cfg.offset_mode.offset();
    for (id, &seen) in &state.last_seen {
        if id != visiting_id {
            z_hat += survival(state, (t - seen) as f64, cfg);
        }
    }
    z_hat
}

pub fn decafork_decide<R: Rng + ?Sized>(z_hat: f64, cfg: &PolicyConfig, rng: &mut R) -> Decision {
    let mut d = Decision::none();
    d.estimate = Some(z_hat);
    if z_hat < cfg.gamma && rng.random::<f64>() < cfg.fork_prob() {
        d.action = Action::Fork;
    }
    d
}

pub fn decaforkplus_decide<R: Rng + ?Sized>(
    z_hat: f64,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> Result<Decision, PolicyError> {
    let gamma_term = cfg.gamma_term.unwrap_or(f64::NEG_INFINITY);
    if !(gamma_term > cfg.gamma) {
        return Err(PolicyError::BadGammaTerm { got: gamma_term, gamma: cfg.gamma });
    }
    let mut d = decafork_decide(z_hat, cfg, rng);
    if z_hat > gamma_term && rng.random::<f64>() < cfg.fork_prob() {
        d.action = Action::Terminate;
    }
    Ok(d)
}

/// Checks every tracked id other than the visitor for staleness beyond T_MP
/// and independently proposes a same-id replacement with probability
/// fork_prob. The engine refreshes last_seen for each replaced id so this
/// node does not re-fork it on every subsequent visit.
pub fn missing_person_decide<R: Rng + ?Sized>(
    state: &NodeState,
    visiting_id: &WalkId,
    t: i64,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> Decision {
    let t_mp = match cfg.t_mp {
        Some(v) => v as i64,
        None => {
            let p = 1.0 - 0.01 / cfg.z0 as f64;
            match state.samples.quantile(p) {
                Some(q) => q as i64,
                None => return Decision::none(),
            }
        }
    };
    let mut d = Decision::none();
    for (id, &seen) in &state.last_seen {
        if id != visiting_id && t - seen > t_mp && rng.random::<f64>() < cfg.fork_prob() {
            d.replace_ids.push(id.clone());
        }
    }
    d
}
