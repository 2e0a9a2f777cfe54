//! Discrete-time synchronous simulation of multiple random-walk tokens:
//! movement, visit bookkeeping, fork/terminate mechanics, warmup, and trace
//! recording.
//!
//! Step order within one tick: movement, failure injection, then per-node
//! visit bookkeeping and one policy decision on a uniformly chosen arrival.
//! A walk killed in transit contributes no return-time sample that step.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::failures::{self, ByzMode, ByzantineState, FailurePlan};
use crate::graph::{uniform_neighbor, Graph};
use crate::policies::{self, Action, PolicyConfig, PolicyKind, SurvivalMode};
use crate::samples::SampleSet;

/// Lineage identifier of a walk token: the root index plus the ordered list
/// of (forking node, fork time) pairs appended at each fork. The encoding is
/// injective, so ids are globally unique within a run — except in
/// MissingPerson mode, where replacements deliberately reuse the replaced id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WalkId {
    pub root: u32,
    pub forks: Vec<(u32, i64)>,
}

impl WalkId {
    pub fn initial(root: u32) -> Self {
        WalkId { root, forks: Vec::new() }
    }

    pub fn child(&self, node: u32, t: i64) -> Self {
        let mut forks = self.forks.clone();
        forks.push((node, t));
        WalkId { root: self.root, forks }
    }
}

impl fmt::Display for WalkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)?;
        for (node, t) in &self.forks {
            write!(f, "/({node},{t})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct WalkToken {
    pub id: WalkId,
    pub position: u32,
    pub active: bool,
    pub born_at: i64,
    pub died_at: Option<i64>,
}

impl WalkToken {
    pub fn kill(&mut self, t: i64) {
        self.active = false;
        self.died_at = Some(t);
    }
}

/// Per-node bookkeeping: last-seen times per known walk and the pooled
/// empirical return-gap samples. The known set is exactly the key set of
/// `last_seen`; dead walks are never purged (nodes cannot observe deaths).
#[derive(Clone, Debug, Default)]
pub struct NodeState {
    pub last_seen: BTreeMap<WalkId, i64>,
    pub samples: SampleSet,
}

impl NodeState {
    /// Visit bookkeeping: a revisit contributes the gap `t - last_seen` to
    /// the pooled samples; a first visit only creates the entry.
    pub fn record_visit(&mut self, walk: &WalkId, t: i64) {
        if let Some(prev) = self.last_seen.get_mut(walk) {
            let gap = t - *prev;
            *prev = t;
            // gap 0 happens only when duplicate-id replacement tokens arrive
            // together; that is a repeated sighting, not a return
            if gap >= 1 {
                self.samples.add(gap as u32);
            }
        } else {
            self.last_seen.insert(walk.clone(), t);
        }
    }

    pub fn known_count(&self) -> usize {
        self.last_seen.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Fork,
    Terminate,
    ProbFail,
    BurstFail,
    ByzKill,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Fork => "fork",
            EventKind::Terminate => "terminate",
            EventKind::ProbFail => "prob_fail",
            EventKind::BurstFail => "burst_fail",
            EventKind::ByzKill => "byz_kill",
        }
    }

    pub fn is_death(self) -> bool {
        !matches!(self, EventKind::Fork)
    }
}

#[derive(Clone, Debug)]
pub struct Event {
    pub t: i64,
    pub kind: EventKind,
    pub walk: WalkId,
    pub node: u32,
}

#[derive(Clone, Debug)]
pub struct EstimateRecord {
    pub t: i64,
    pub node: u32,
    pub z_hat: f64,
}

/// Per-run record: the walk count per step, all fork/death events, and the
/// estimates logged at decision points when enabled.
#[derive(Clone, Debug, Default)]
pub struct RunTrace {
    pub z_series: Vec<u32>,
    pub events: Vec<Event>,
    pub estimates: Vec<EstimateRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    SingleNode,
    RandomNodes,
}

/// Rates fitted from the warmup phase: `lambda_hat` from pooled return gaps
/// (censored-exponential MLE), `mu_hat` from first-hitting times (1/mean).
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct FittedRates {
    pub lambda_hat: Option<f64>,
    pub mu_hat: Option<f64>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("warmup did not cover all nodes within {0} steps")]
    WarmupTimeout(u64),
    #[error("warmup already completed")]
    WarmupAlreadyDone,
}

pub struct SimState {
    pub time: i64,
    pub graph: Graph,
    pub walks: Vec<WalkToken>,
    pub nodes: Vec<NodeState>,
    pub policy: PolicyConfig,
    pub failures: FailurePlan,
    pub byz: Option<ByzantineState>,
    pub warmup_done: bool,
    pub fitted: FittedRates,
    pub log_estimates: bool,
    /// Drop known entries whose survival falls below this (off by default).
    pub prune_survival_below: Option<f64>,
    rng: ChaCha8Rng,
    coverage: Vec<Vec<bool>>,
    coverage_remaining: Vec<u32>,
    first_hit_sum: u64,
    first_hit_count: u64,
    next_burst: usize,
}

/// Step output: fork/death events plus estimates logged this step.
#[derive(Clone, Debug, Default)]
pub struct StepOutput {
    pub events: Vec<Event>,
    pub estimates: Vec<EstimateRecord>,
}

pub fn init_simulation(
    graph: Graph,
    policy: PolicyConfig,
    failures: FailurePlan,
    z0: u32,
    placement: Placement,
    seed: u64,
) -> Result<SimState, EngineError> {
    if z0 < 1 {
        return Err(EngineError::Config("z0 must be >= 1".into()));
    }
    policy.validate().map_err(|e| EngineError::Config(e.to_string()))?;
    failures.validate().map_err(|e| EngineError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = graph.n();
    let origin = rng.random_range(0..n);
    let walks: Vec<WalkToken> = (0..z0)
        .map(|k| {
            let position = match placement {
                Placement::SingleNode => origin,
                Placement::RandomNodes => rng.random_range(0..n),
            };
            WalkToken {
                id: WalkId::initial(k),
                position,
                active: true,
                born_at: 0,
                died_at: None,
            }
        })
        .collect();
    let byz = failures.byzantine.as_ref().map(|cfg| {
        if cfg.node >= n {
            return Err(EngineError::Config(format!(
                "byzantine node {} out of range",
                cfg.node
            )));
        }
        Ok(ByzantineState { current: cfg.initial_state })
    });
    let byz = match byz {
        Some(r) => Some(r?),
        None => None,
    };
    let mut coverage = vec![vec![false; n as usize]; z0 as usize];
    let mut coverage_remaining = vec![n; z0 as usize];
    for w in &walks {
        let k = w.id.root as usize;
        if !coverage[k][w.position as usize] {
            coverage[k][w.position as usize] = true;
            coverage_remaining[k] -= 1;
        }
    }
    Ok(SimState {
        time: 0,
        nodes: vec![NodeState::default(); n as usize],
        graph,
        walks,
        policy,
        failures,
        byz,
        warmup_done: false,
        fitted: FittedRates::default(),
        log_estimates: false,
        prune_survival_below: None,
        rng,
        coverage,
        coverage_remaining,
        first_hit_sum: 0,
        first_hit_count: 0,
        next_burst: 0,
    })
}

impl SimState {
    pub fn active_count(&self) -> u32 {
        self.walks.iter().filter(|w| w.active).count() as u32
    }

    /// Runs movement and visit recording (no failures, no policy decisions)
    /// until every initial walk has visited every node, then resets the clock
    /// to zero so failure schedules align with the post-warmup time axis.
    pub fn warmup(&mut self, cap: u64) -> Result<(), EngineError> {
        if self.warmup_done {
            return Err(EngineError::WarmupAlreadyDone);
        }
        // positions at t=0 count as first hits at time 0
        for w in &self.walks {
            self.first_hit_count += 1; // hit time 0 contributes 0 to the sum
            let _ = w;
        }
        let mut steps: u64 = 0;
        while self.coverage_remaining.iter().any(|&r| r > 0) {
            if steps >= cap {
                return Err(EngineError::WarmupTimeout(cap));
            }
            steps += 1;
            self.time += 1;
            let t = self.time;
            for i in 0..self.walks.len() {
                if !self.walks[i].active {
                    continue;
                }
                let pos = uniform_neighbor(&self.graph, self.walks[i].position, &mut self.rng);
                self.walks[i].position = pos;
                let k = self.walks[i].id.root as usize;
                if !self.coverage[k][pos as usize] {
                    self.coverage[k][pos as usize] = true;
                    self.coverage_remaining[k] -= 1;
                    self.first_hit_sum += t as u64;
                    self.first_hit_count += 1;
                }
                let id = self.walks[i].id.clone();
                self.nodes[pos as usize].record_visit(&id, t);
            }
        }
        let warmup_len = self.time;
        for node in &mut self.nodes {
            for seen in node.last_seen.values_mut() {
                *seen -= warmup_len;
            }
        }
        for w in &mut self.walks {
            w.born_at = 0;
        }
        self.time = 0;
        self.warmup_done = true;
        self.fit_rates();
        if self.policy.kind == PolicyKind::MissingPerson {
            // every node starts tracking all initial ids from time 0
            for node in &mut self.nodes {
                for k in 0..self.policy.z0 {
                    node.last_seen.insert(WalkId::initial(k), 0);
                }
            }
        }
        Ok(())
    }

    fn fit_rates(&mut self) {
        // Exponential MLE with right censoring: gaps still open at the end of
        // warmup contribute their elapsed time to the denominator (last_seen
        // has already been shifted so the open elapsed time is -seen).
        let (mut sum, mut count) = (0u64, 0u64);
        for node in &self.nodes {
            sum += node.samples.sum();
            count += node.samples.len();
            for seen in node.last_seen.values() {
                sum += (-seen) as u64;
            }
        }
        if count > 0 && sum > 0 {
            self.fitted.lambda_hat = Some(count as f64 / sum as f64);
        }
        if self.first_hit_count > 0 && self.first_hit_sum > 0 {
            self.fitted.mu_hat = Some(self.first_hit_count as f64 / self.first_hit_sum as f64);
        }
        if let SurvivalMode::AnalyticalExponential { lambda: lambda @ None } =
            &mut self.policy.survival_mode
        {
            *lambda = self.fitted.lambda_hat;
        }
    }

    /// Creates an active copy of the walk at `parent_idx`, positioned at the
    /// forking node; it moves for the first time at t+1. In MissingPerson
    /// mode the caller passes `replace` to reuse the replaced identifier.
    pub fn fork_walk(&mut self, node: u32, parent_idx: usize, t: i64, replace: Option<WalkId>) -> WalkId {
        let id = match replace {
            Some(id) => id,
            None => self.walks[parent_idx].id.child(node, t),
        };
        self.walks.push(WalkToken {
            id: id.clone(),
            position: node,
            active: true,
            born_at: t,
            died_at: None,
        });
        id
    }

    /// Advances the simulation by one synchronous tick.
    pub fn step(&mut self) -> StepOutput {
        assert!(self.warmup_done, "step() before warmup");
        self.time += 1;
        let t = self.time;
        let mut out = StepOutput::default();

        // (1) movement
        for w in &mut self.walks {
            if w.active {
                w.position = uniform_neighbor(&self.graph, w.position, &mut self.rng);
            }
        }

        // (2) failures: probabilistic, burst, Byzantine absorption
        if self.failures.p_fail > 0.0 {
            for idx in failures::apply_probabilistic(&mut self.walks, self.failures.p_fail, t, &mut self.rng)
            {
                out.events.push(Event {
                    t,
                    kind: EventKind::ProbFail,
                    walk: self.walks[idx].id.clone(),
                    node: self.walks[idx].position,
                });
            }
        }
        while self.next_burst < self.failures.bursts.len()
            && self.failures.bursts[self.next_burst].t == t
        {
            let count = self.failures.bursts[self.next_burst].count;
            self.next_burst += 1;
            for idx in failures::apply_burst(&mut self.walks, count, t, &mut self.rng) {
                out.events.push(Event {
                    t,
                    kind: EventKind::BurstFail,
                    walk: self.walks[idx].id.clone(),
                    node: self.walks[idx].position,
                });
            }
        }
        if let (Some(cfg), Some(byz)) = (self.failures.byzantine.clone(), self.byz.as_mut()) {
            if let Some(mode) = cfg.override_at(t) {
                byz.current = mode;
            } else {
                failures::byzantine_step(byz, cfg.p_transit, &mut self.rng);
            }
            if byz.current == ByzMode::Byz {
                for idx in failures::absorb_at_byzantine(&mut self.walks, cfg.node, t) {
                    out.events.push(Event {
                        t,
                        kind: EventKind::ByzKill,
                        walk: self.walks[idx].id.clone(),
                        node: cfg.node,
                    });
                }
            }
        }

        // (3) group surviving arrivals by node
        let mut arrivals: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (idx, w) in self.walks.iter().enumerate() {
            if w.active {
                arrivals.entry(w.position).or_default().push(idx);
            }
        }

        // (4) visit bookkeeping for all arrivals, one policy decision per node
        for (node, idxs) in arrivals {
            for &idx in &idxs {
                let id = self.walks[idx].id.clone();
                self.nodes[node as usize].record_visit(&id, t);
            }
            let chosen = idxs[self.rng.random_range(0..idxs.len())];
            let chosen_id = self.walks[chosen].id.clone();
            match self.policy.kind {
                PolicyKind::None => {
                    if self.log_estimates {
                        let z_hat = policies::estimate(
                            &self.nodes[node as usize],
                            &chosen_id,
                            t,
                            &self.policy,
                        );
                        out.estimates.push(EstimateRecord { t, node, z_hat });
                    }
                }
                PolicyKind::Decafork | PolicyKind::DecaforkPlus => {
                    let z_hat =
                        policies::estimate(&self.nodes[node as usize], &chosen_id, t, &self.policy);
                    if self.log_estimates {
                        out.estimates.push(EstimateRecord { t, node, z_hat });
                    }
                    let decision = if self.policy.kind == PolicyKind::Decafork {
                        policies::decafork_decide(z_hat, &self.policy, &mut self.rng)
                    } else {
                        policies::decaforkplus_decide(z_hat, &self.policy, &mut self.rng)
                            .expect("gamma_term validated at init")
                    };
                    match decision.action {
                        Action::Fork => {
                            let new_id = self.fork_walk(node, chosen, t, None);
                            out.events.push(Event { t, kind: EventKind::Fork, walk: new_id, node });
                        }
                        Action::Terminate => {
                            self.walks[chosen].kill(t);
                            out.events.push(Event {
                                t,
                                kind: EventKind::Terminate,
                                walk: chosen_id,
                                node,
                            });
                        }
                        Action::None => {}
                    }
                }
                PolicyKind::MissingPerson => {
                    let decision = policies::missing_person_decide(
                        &self.nodes[node as usize],
                        &chosen_id,
                        t,
                        &self.policy,
                        &mut self.rng,
                    );
                    for replaced in decision.replace_ids {
                        self.fork_walk(node, chosen, t, Some(replaced.clone()));
                        self.nodes[node as usize].last_seen.insert(replaced.clone(), t);
                        out.events.push(Event {
                            t,
                            kind: EventKind::Fork,
                            walk: replaced,
                            node,
                        });
                    }
                }
            }
            if let Some(threshold) = self.prune_survival_below {
                let state = &self.nodes[node as usize];
                let stale: Vec<WalkId> = state
                    .last_seen
                    .iter()
                    .filter(|(_, &seen)| {
                        policies::survival(state, (t - seen) as f64, &self.policy) < threshold
                    })
                    .map(|(id, _)| id.clone())
                    .collect();
                for id in stale {
                    self.nodes[node as usize].last_seen.remove(&id);
                }
            }
        }
        out
    }

    /// Applies `horizon` steps and returns the complete trace.
    pub fn run(&mut self, horizon: u64) -> RunTrace {
        let mut trace = RunTrace::default();
        trace.z_series.push(self.active_count());
        for _ in 0..horizon {
            let out = self.step();
            trace.events.extend(out.events);
            trace.estimates.extend(out.estimates);
            trace.z_series.push(self.active_count());
        }
        trace
    }
}
