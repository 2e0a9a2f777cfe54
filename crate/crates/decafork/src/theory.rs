//! Closed-form distributions and bounds for the walk-count estimator:
//! Irwin-Hall laws, the forked-walk estimator distribution and its moments,
//! Bennett-type fork/termination probability bounds, threshold design,
//! reaction-time and growth bounds, and overshoot bounds.
//!
//! All functions are pure and reentrant. Times are continuous (f64) here;
//! the engine's integer steps embed directly.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub const IRWIN_HALL_MAX_M: u32 = 64;
/// Step cap for iterative bound accumulation (reaction time).
pub const REACTION_STEP_CAP: u64 = 1_000_000;
/// Returned when a growth time is unbounded (vanishing fork probability).
pub const GROWTH_TIME_CAP: f64 = 1e15;
pub const OVERSHOOT_MAX_DEPTH: u32 = 12;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TheoryParams {
    /// Return rate λ of the per-node revisit law Exp(λ).
    pub lambda_r: f64,
    /// Hitting rate μ of the first-arrival law Exp(μ).
    pub mu_h: f64,
    pub z0: u32,
    pub fork_prob: f64,
    pub gamma: f64,
    pub gamma_term: f64,
    pub n: u32,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<(), TheoryError> {
        if !(self.lambda_r > 0.0) || !(self.mu_h > 0.0) {
            return Err(TheoryError::InvalidArgument("rates must be positive".into()));
        }
        if self.z0 < 1 || self.n < 1 {
            return Err(TheoryError::InvalidArgument("z0 and n must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fork_prob) {
            return Err(TheoryError::InvalidArgument("fork_prob must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Fork/termination history entering the estimator moments: `active_count`
/// walks active since long before any event, plus (time, count) groups of
/// terminations and forks, all at times ≤ `now`.
#[derive(Clone, Debug, Default)]
pub struct EventHistory {
    pub active_count: u32,
    pub terminations: Vec<(f64, u32)>,
    pub forks: Vec<(f64, u32)>,
    pub now: f64,
}

impl EventHistory {
    pub fn validate(&self) -> Result<(), TheoryError> {
        let ok = |(t, c): &(f64, u32)| *t <= self.now && *c >= 1;
        if self.terminations.iter().all(ok) && self.forks.iter().all(ok) {
            Ok(())
        } else {
            Err(TheoryError::InvalidArgument(
                "event times must be <= now and counts >= 1".into(),
            ))
        }
    }
}

/// A probability bound plus a flag marking that the precondition (the mean
/// being on the right side of the threshold) failed, in which case the bound
/// degenerates to the raw decision probability p.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundResult {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("sum-of-uniforms count {0} exceeds supported maximum {IRWIN_HALL_MAX_M}")]
    UnsupportedCount(u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("variance is singular at mu = {mu} with lambda = {lambda} (mu in {{2λ, 3λ}})")]
    SingularParameters { lambda: f64, mu: f64 },
    #[error("bound did not reach the target within {0} steps")]
    NonConvergence(u64),
    #[error("history must contain at least one active walk")]
    EmptyActive,
    #[error("threshold constraint violated at prefix {0:?}")]
    ThresholdConstraint(Vec<u8>),
}

struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn new() -> Self {
        KahanSum { sum: 0.0, comp: 0.0 }
    }

    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// CDF of the sum of m independent U(0,1) variables, by the alternating
/// binomial sum, evaluated with log-domain magnitudes and compensated
/// summation. m = 0 is the empty sum (point mass at 0).
pub fn irwin_hall_cdf(m: u32, sigma: f64) -> Result<f64, TheoryError> {
    if m > IRWIN_HALL_MAX_M {
        return Err(TheoryError::UnsupportedCount(m));
    }
    if m == 0 {
        return Ok(if sigma < 0.0 { 0.0 } else { 1.0 });
    }
    if sigma <= 0.0 {
        return Ok(0.0);
    }
    if sigma >= m as f64 {
        return Ok(1.0);
    }
    if sigma == m as f64 / 2.0 {
        return Ok(0.5); // exact by symmetry; dodges midpoint cancellation
    }
    // reflect into the lower half: fewer alternating terms and far less
    // cancellation in what would otherwise be a 1 - tiny upper tail
    if sigma > m as f64 / 2.0 {
        return Ok(1.0 - irwin_hall_cdf(m, m as f64 - sigma)?);
    }
    let ln_m_fact: f64 = (2..=m as u64).map(|k| (k as f64).ln()).sum();
    let mut ln_binom = 0.0; // ln C(m, tau), updated by recurrence
    let mut acc = KahanSum::new();
    for tau in 0..=(sigma.floor() as u32) {
        if tau > 0 {
            ln_binom += ((m - tau + 1) as f64).ln() - (tau as f64).ln();
        }
        let gap = sigma - tau as f64;
        if gap <= 0.0 {
            continue; // 0^m term at integer sigma
        }
        let magnitude = (ln_binom + m as f64 * gap.ln() - ln_m_fact).exp();
        acc.add(if tau % 2 == 0 { magnitude } else { -magnitude });
    }
    Ok(acc.sum.clamp(0.0, 1.0))
}

/// CDF of the estimator mass contributed by k_t walks that all failed
/// `elapsed` ago: a scaled Irwin-Hall law.
pub fn scaled_failed_cdf(
    k_t: u32,
    sigma: f64,
    lambda_r: f64,
    elapsed: f64,
) -> Result<f64, TheoryError> {
    if k_t < 1 || elapsed < 0.0 {
        return Err(TheoryError::InvalidArgument(
            "need k_t >= 1 and elapsed >= 0".into(),
        ));
    }
    irwin_hall_cdf(k_t, sigma * (lambda_r * elapsed).exp())
}

/// Picks the fork threshold γ with F_{Σ_{z0−1}}(γ−1/2) = δ* and the
/// termination threshold γ_term with 1 − F_{Σ_{z0−1}}(γ_term−1/2) = δ*, each
/// by bisection to absolute tolerance 1e−9.
pub fn design_thresholds(z0: u32, delta_star: f64) -> Result<(f64, f64), TheoryError> {
    if !(delta_star > 0.0 && delta_star < 0.5) {
        return Err(TheoryError::InvalidArgument(format!(
            "delta_star {delta_star} not in (0, 1/2)"
        )));
    }
    if z0 < 2 {
        return Err(TheoryError::InvalidArgument("threshold design needs z0 >= 2".into()));
    }
    let m = z0 - 1;
    let solve = |target: f64| -> Result<f64, TheoryError> {
        let (mut lo, mut hi) = (0.0f64, m as f64);
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if irwin_hall_cdf(m, mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let gamma = solve(delta_star)? + 0.5;
    let gamma_term = solve(1.0 - delta_star)? + 0.5;
    Ok((gamma, gamma_term))
}

fn check_fork_times(t: f64, tau_f: f64, tau_t: f64) -> Result<(), TheoryError> {
    if tau_f <= tau_t && tau_t <= t {
        Ok(())
    } else {
        Err(TheoryError::InvalidArgument(format!(
            "need tau_f <= tau_t <= t, got tau_f={tau_f}, tau_t={tau_t}, t={t}"
        )))
    }
}

/// CDF of a single forked walk's survival value as seen by a random node at
/// time t: forked at tau_f, terminated at tau_t (pass tau_t = t while still
/// active). Piecewise: 1 above e^{−λ(t−τ_T)}; an atom of mass e^{−μ(τ_T−τ_F)}
/// at 0 (the walk never reached the node before terminating) below
/// e^{−λ(t−τ_F)}; a smooth bridge in between.
pub fn forked_cdf(
    x: f64,
    t: f64,
    tau_f: f64,
    tau_t: f64,
    lambda_r: f64,
    mu_h: f64,
) -> Result<f64, TheoryError> {
    check_fork_times(t, tau_f, tau_t)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(TheoryError::InvalidArgument(format!("x = {x} not in [0,1]")));
    }
    let upper = (-lambda_r * (t - tau_t)).exp();
    let lower = (-lambda_r * (t - tau_f)).exp();
    let atom = (-mu_h * (tau_t - tau_f)).exp();
    if x > upper {
        return Ok(1.0);
    }
    if x <= lower {
        return Ok(atom);
    }
    let bridge =
        x * (1.0 - (-mu_h * (t - tau_f)).exp() * x.powf(-mu_h / lambda_r)) / upper + atom;
    Ok(bridge.clamp(0.0, 1.0))
}

/// Mean of the forked-walk survival value. The removable singularity at
/// μ = 2λ is evaluated through expm1(−uλa)/u with u = μ/λ − 2, which is the
/// exact limit at u = 0.
pub fn forked_mean(
    t: f64,
    tau_f: f64,
    tau_t: f64,
    lambda_r: f64,
    mu_h: f64,
) -> Result<f64, TheoryError> {
    check_fork_times(t, tau_f, tau_t)?;
    let a = tau_t - tau_f;
    let b = t - tau_t;
    let u = mu_h / lambda_r - 2.0;
    // (e^{-mu a} - e^{-2 lambda a}) / u: expm1 form near the removable
    // singularity u = 0, direct difference otherwise (both factors <= 1, so
    // no overflow for large |u| * a)
    let w = u * lambda_r * a;
    let ratio = if u == 0.0 {
        -lambda_r * a * (-2.0 * lambda_r * a).exp()
    } else if w.abs() < 1.0 {
        (-2.0 * lambda_r * a).exp() * (-w).exp_m1() / u
    } else {
        ((-mu_h * a).exp() - (-2.0 * lambda_r * a).exp()) / u
    };
    let s = (-lambda_r * b).exp();
    Ok(s * (0.5 - (u + 1.0) * ratio - 0.5 * (-2.0 * lambda_r * a).exp()))
}

/// Variance of the forked-walk survival value, evaluated as the second
/// moment minus the squared mean (algebraically identical to the expanded
/// closed form). Genuinely singular at μ ∈ {2λ, 3λ}.
pub fn forked_var(
    t: f64,
    tau_f: f64,
    tau_t: f64,
    lambda_r: f64,
    mu_h: f64,
) -> Result<f64, TheoryError> {
    check_fork_times(t, tau_f, tau_t)?;
    let tol = 1e-9 * lambda_r;
    if (mu_h - 2.0 * lambda_r).abs() < tol || (mu_h - 3.0 * lambda_r).abs() < tol {
        return Err(TheoryError::SingularParameters { lambda: lambda_r, mu: mu_h });
    }
    let a = tau_t - tau_f;
    let b = t - tau_t;
    let second_moment = (-2.0 * lambda_r * b).exp()
        * (2.0 * mu_h * (-3.0 * lambda_r * a).exp() + (mu_h - 3.0 * lambda_r)
            + 3.0 * (mu_h - lambda_r) * (-mu_h * a).exp())
        / (3.0 * (mu_h - 3.0 * lambda_r));
    let mean = forked_mean(t, tau_f, tau_t, lambda_r, mu_h)?;
    Ok(second_moment - mean * mean)
}

/// Expected estimator value at h.now: the visiting walk's 1/2 offset, half
/// each for long-active walks, decaying halves for terminated groups, and the
/// forked-walk mean for each fork group (still active, so τ_T = now).
pub fn expected_estimate(h: &EventHistory, params: &TheoryParams) -> Result<f64, TheoryError> {
    h.validate()?;
    if h.active_count < 1 {
        return Err(TheoryError::EmptyActive);
    }
    let mut e = 0.5 + (h.active_count - 1) as f64 / 2.0;
    for &(tau, count) in &h.terminations {
        e += count as f64 * (-params.lambda_r * (h.now - tau)).exp() / 2.0;
    }
    for &(tau, count) in &h.forks {
        e += count as f64 * forked_mean(h.now, tau, h.now, params.lambda_r, params.mu_h)?;
    }
    Ok(e)
}

/// Variance of the estimator at h.now: 1/12 per long-active walk other than
/// the visitor, the forked-walk variance per fork, and the shrunken uniform
/// variance per termination.
pub fn estimate_variance(h: &EventHistory, params: &TheoryParams) -> Result<f64, TheoryError> {
    h.validate()?;
    if h.active_count < 1 {
        return Err(TheoryError::EmptyActive);
    }
    let mut v = (h.active_count - 1) as f64 / 12.0;
    for &(tau, count) in &h.forks {
        v += count as f64 * forked_var(h.now, tau, h.now, params.lambda_r, params.mu_h)?;
    }
    for &(tau, count) in &h.terminations {
        v += count as f64 * (-2.0 * params.lambda_r * (h.now - tau)).exp() / 12.0;
    }
    Ok(v)
}

/// Bennett function h(ζ) = (1 + ζ)ln(1 + ζ) − ζ.
pub fn bennett_h(zeta: f64) -> f64 {
    (1.0 + zeta) * zeta.ln_1p() - zeta
}

fn bennett_bound(p: f64, gap: f64, variance: f64) -> BoundResult {
    if gap <= 0.0 {
        return BoundResult { value: p, degenerate: true };
    }
    if variance <= 0.0 {
        return BoundResult { value: 0.0, degenerate: false };
    }
    let zeta = gap * gap / variance;
    BoundResult { value: p * (-variance * bennett_h(zeta)).exp(), degenerate: false }
}

/// Upper bound on the per-decision forking probability given the event
/// history, valid when E[Ẑ] > γ. Otherwise degenerate: the only safe bound
/// is the raw probability p.
pub fn fork_prob_bound(h: &EventHistory, params: &TheoryParams) -> Result<BoundResult, TheoryError> {
    let e = expected_estimate(h, params)?;
    let v = estimate_variance(h, params)?;
    Ok(bennett_bound(params.fork_prob, e - params.gamma, v))
}

/// Upper bound on the per-decision termination probability, valid when
/// E[Ẑ] < γ_term; symmetric to [`fork_prob_bound`].
pub fn term_prob_bound(h: &EventHistory, params: &TheoryParams) -> Result<BoundResult, TheoryError> {
    let e = expected_estimate(h, params)?;
    let v = estimate_variance(h, params)?;
    Ok(bennett_bound(params.fork_prob, params.gamma_term - e, v))
}

/// Fork-probability bound with i walks all known everywhere:
/// i·p·F_{Σ_{i−1}}(γ−1/2), clamped to 1.
pub fn pfork_plus(i: u32, params: &TheoryParams) -> Result<f64, TheoryError> {
    if i < 1 {
        return Err(TheoryError::InvalidArgument("walk count must be >= 1".into()));
    }
    let f = irwin_hall_cdf(i - 1, params.gamma - 0.5)?;
    Ok((i as f64 * params.fork_prob * f).min(1.0))
}

fn default_eps_grid(gamma: f64) -> Vec<f64> {
    let width = gamma - 0.5;
    (0..64).map(|j| width * (j as f64 + 0.5) / 64.0).collect()
}

/// Bound on the steps until at least one fork happens after k_t walks failed
/// and r replacement forks already occurred, with z_active long-active walks
/// remaining. For each ε' in the grid, the no-fork probability product is
/// accumulated until it drops below delta_target; the minimum step count
/// over the grid is returned.
pub fn reaction_time_bound(
    k_t: u32,
    r: u32,
    z_active: u32,
    params: &TheoryParams,
    delta_target: f64,
    eps_grid: Option<&[f64]>,
) -> Result<u64, TheoryError> {
    params.validate()?;
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(TheoryError::InvalidArgument("delta_target must be in (0,1)".into()));
    }
    if r >= k_t || z_active + r < 1 {
        return Err(TheoryError::InvalidArgument(
            "need r < k_t and at least one active walk".into(),
        ));
    }
    let default_grid;
    let grid = match eps_grid {
        Some(g) => g,
        None => {
            default_grid = default_eps_grid(params.gamma);
            &default_grid
        }
    };
    if grid.iter().any(|&e| !(e > 0.0 && e < params.gamma - 0.5)) {
        return Err(TheoryError::InvalidArgument(
            "eps grid must lie in (0, gamma - 1/2)".into(),
        ));
    }
    let mut best: Option<u64> = None;
    for &eps in grid {
        let f_active = irwin_hall_cdf(z_active + r - 1, eps)?;
        if params.fork_prob * f_active == 0.0 {
            continue; // the product never decreases for this eps
        }
        let sigma = params.gamma - eps - 0.5;
        let mut product = 1.0f64;
        for step in 0..REACTION_STEP_CAP {
            let f_failed = scaled_failed_cdf(k_t - r, sigma, params.lambda_r, step as f64)?;
            product *= 1.0 - params.fork_prob * f_active * f_failed;
            if product < delta_target {
                let t = step + 1;
                if best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
                break;
            }
            if best.is_some_and(|b| step + 1 >= b) {
                break; // cannot beat the current optimum
            }
        }
    }
    best.ok_or(TheoryError::NonConvergence(REACTION_STEP_CAP))
}

/// Chained version: steps until r_prime forks happened, splitting the total
/// failure budget uniformly over the r_prime single-fork bounds.
pub fn reaction_time_chained(
    k_t: u32,
    r_prime: u32,
    z_active: u32,
    params: &TheoryParams,
    delta_total: f64,
    eps_grid: Option<&[f64]>,
) -> Result<u64, TheoryError> {
    if r_prime < 1 || r_prime > k_t {
        return Err(TheoryError::InvalidArgument("need 1 <= r_prime <= k_t".into()));
    }
    let per_step = delta_total / r_prime as f64;
    let mut total = 0u64;
    for r in 0..r_prime {
        total += reaction_time_bound(k_t, r, z_active, params, per_step, eps_grid)?;
    }
    Ok(total)
}

/// Time until all n nodes have likely been visited at the i-walk fork level:
/// (1/μ)·ln(μn/p⁺ᵢ), floored at 0.
pub fn visit_time(mu_h: f64, n: u32, p_plus: f64) -> f64 {
    if p_plus <= 0.0 {
        return GROWTH_TIME_CAP;
    }
    ((mu_h * n as f64 / p_plus).ln() / mu_h).max(0.0)
}

/// Result of the growth bound: the per-level schedule tᵢ for i = z0..n_max−1,
/// the leftover no-fork time at level n_max, and the failure probability δ.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthSchedule {
    pub n_max: u32,
    pub t_i: Vec<f64>,
    pub t_nofork: f64,
    pub delta: f64,
}

/// Probability bound on ever exceeding z_bound walks within t_total failure-
/// free steps. Short horizons (t_total below the first level time) use the
/// tighter geometric form 1 − (1 − p⁺_{z0})^{t_total}.
pub fn growth_prob_bound(
    z_bound: u32,
    t_total: f64,
    params: &TheoryParams,
) -> Result<GrowthSchedule, TheoryError> {
    params.validate()?;
    if z_bound <= params.z0 {
        return Err(TheoryError::InvalidArgument("z_bound must exceed z0".into()));
    }
    if !(t_total > 0.0) {
        return Err(TheoryError::InvalidArgument("t_total must be positive".into()));
    }
    let p0 = pfork_plus(params.z0, params)?;
    let t0 = visit_time(params.mu_h, params.n, p0);
    if t_total <= t0 {
        let delta = if p0 > 0.0 { 1.0 - (1.0 - p0).powf(t_total) } else { 0.0 };
        return Ok(GrowthSchedule {
            n_max: params.z0,
            t_i: Vec::new(),
            t_nofork: t_total,
            delta: delta.clamp(0.0, 1.0),
        });
    }
    let mut t_i = Vec::new();
    let mut sum_t = 0.0;
    let mut delta_sum = 0.0;
    let mut n_max = params.z0;
    for i in params.z0..z_bound {
        let p_plus = pfork_plus(i, params)?;
        let t = visit_time(params.mu_h, params.n, p_plus);
        if sum_t + t >= t_total {
            break;
        }
        sum_t += t;
        delta_sum += params.n as f64 * (-params.mu_h * t).exp() + t * p_plus;
        t_i.push(t);
        n_max = i + 1;
    }
    let t_nofork = t_total - sum_t;
    let p_top = pfork_plus(n_max, params)?;
    let delta = (p_top * t_nofork + delta_sum).clamp(0.0, 1.0);
    Ok(GrowthSchedule { n_max, t_i, t_nofork, delta })
}

/// Inverts [`growth_prob_bound`]: the run time guaranteed to keep the walk
/// count below z_bound except with probability delta. Extends the schedule
/// while the accumulated failure mass stays within delta, then spends the
/// remainder at the top level (capped at that level's visit time so the
/// forward bound of the returned time never exceeds delta).
pub fn growth_time_bound(
    delta: f64,
    z_bound: u32,
    params: &TheoryParams,
) -> Result<f64, TheoryError> {
    params.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TheoryError::InvalidArgument("delta must be in (0,1)".into()));
    }
    if z_bound <= params.z0 {
        return Err(TheoryError::InvalidArgument("z_bound must exceed z0".into()));
    }
    let mut sum_t = 0.0;
    let mut delta_sum = 0.0;
    let mut n_max = params.z0;
    for i in params.z0..z_bound {
        let p_plus = pfork_plus(i, params)?;
        let t = visit_time(params.mu_h, params.n, p_plus);
        let term = params.n as f64 * (-params.mu_h * t).exp() + t * p_plus;
        if delta_sum + term > delta {
            break;
        }
        delta_sum += term;
        sum_t += t;
        n_max = i + 1;
    }
    let p_top = pfork_plus(n_max, params)?;
    if p_top <= 0.0 {
        return Ok(GROWTH_TIME_CAP);
    }
    let t_top = visit_time(params.mu_h, params.n, p_top);
    let t_nofork = ((delta - delta_sum) / p_top).min(t_top);
    Ok(sum_t + t_nofork)
}

/// Linear-complexity overshoot approximation: the series Ē[Z] after a failure
/// left z_start walks at tau_t, with forks resuming at t_first_fork. Each
/// step adds ⌈Ē⌉·p̄ with p̄ from the Bennett bound over the ceiled history.
/// The series does not converge: once the ceiling binds, every step adds at
/// least 1 (the count is a submartingale and p̄ never reaches 0), so treat
/// late entries as a divergence indicator, not a forecast.
pub fn overshoot_approx(
    z_start: u32,
    tau_t: f64,
    t_first_fork: f64,
    horizon: u32,
    params: &TheoryParams,
) -> Result<Vec<f64>, TheoryError> {
    params.validate()?;
    if z_start < 1 || horizon < 1 || tau_t > t_first_fork {
        return Err(TheoryError::InvalidArgument(
            "need z_start >= 1, horizon >= 1, tau_t <= t_first_fork".into(),
        ));
    }
    let failed = params.z0.saturating_sub(z_start);
    let terminations: Vec<(f64, u32)> =
        if failed > 0 { vec![(tau_t, failed)] } else { Vec::new() };
    let mut series = vec![z_start as f64];
    let mut forks: Vec<(f64, u32)> = Vec::new();
    for step in 1..=horizon {
        let now = t_first_fork + (step - 1) as f64;
        let h = EventHistory {
            active_count: z_start,
            terminations: terminations.clone(),
            forks: forks.clone(),
            now,
        };
        let p_bar = fork_prob_bound(&h, params)?.value;
        let prev = *series.last().unwrap();
        let ceiled = prev.ceil();
        let next = ceiled + ceiled * p_bar;
        let increment = (next.ceil() - ceiled) as u32;
        if increment > 0 {
            forks.push((t_first_fork + step as f64, increment));
        }
        series.push(next);
    }
    Ok(series)
}

/// Threshold schedule for the exact overshoot bound, indexed by the binary
/// branch prefix. `Geometric` scales by `factor` (at least +1) on every
/// 1-branch; `Explicit` supplies every prefix directly.
#[derive(Clone, Debug)]
pub enum OvershootThresholds {
    Geometric { factor: f64 },
    Explicit(BTreeMap<Vec<u8>, u32>),
}

impl OvershootThresholds {
    fn lookup(&self, prefix: &[u8], z_root: u32) -> Result<u32, TheoryError> {
        match self {
            OvershootThresholds::Geometric { factor } => {
                let mut cur = ((factor * z_root as f64).ceil() as u32).max(z_root + 1);
                for &bit in prefix {
                    if bit == 1 {
                        cur = ((factor * cur as f64).ceil() as u32).max(cur + 1);
                    }
                }
                Ok(cur)
            }
            OvershootThresholds::Explicit(map) => map
                .get(prefix)
                .copied()
                .ok_or_else(|| TheoryError::ThresholdConstraint(prefix.to_vec())),
        }
    }
}

/// Pr(Bin(z, p) > zeta − z): probability that forks push z walks past zeta.
fn doubling_tail(z: u32, zeta: u32, p: f64) -> f64 {
    let lo = (zeta + 1).saturating_sub(z);
    if lo > z {
        return 0.0;
    }
    if p <= 0.0 {
        return if lo == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return 1.0; // all z forks happen; lo <= z
    }
    let (ln_p, ln_q) = (p.ln(), (1.0 - p).ln());
    let mut ln_binom = 0.0;
    let mut acc = KahanSum::new();
    for j in 0..=z {
        if j > 0 {
            ln_binom += ((z - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j >= lo {
            acc.add((ln_binom + j as f64 * ln_p + (z - j) as f64 * ln_q).exp());
        }
    }
    acc.sum.clamp(0.0, 1.0)
}

fn overshoot_history(
    z_seq: &[u32],
    z_start: u32,
    t_first_fork: f64,
    params: &TheoryParams,
) -> EventHistory {
    let failed = params.z0.saturating_sub(z_start);
    let mut forks = Vec::new();
    for k in 1..z_seq.len() {
        if z_seq[k] > z_seq[k - 1] {
            forks.push((t_first_fork + k as f64, z_seq[k] - z_seq[k - 1]));
        }
    }
    EventHistory {
        active_count: z_start,
        terminations: if failed > 0 { vec![(0.0, failed)] } else { Vec::new() },
        forks,
        now: t_first_fork + (z_seq.len() - 1) as f64,
    }
}

/// Exact-form overshoot bound: enumerates every binary branching path of
/// depth x−1 (1 = the count crossed that path's threshold and is bounded by
/// doubling, 0 = it stayed at the threshold), multiplies the binomial
/// crossing probabilities along 1-branches, and sums the conditional
/// single-step expectations at the leaves.
pub fn overshoot_exact(
    z_after_failure: u32,
    t_first_fork: f64,
    depth_x: u32,
    thresholds: &OvershootThresholds,
    params: &TheoryParams,
) -> Result<f64, TheoryError> {
    params.validate()?;
    if z_after_failure < 1 {
        return Err(TheoryError::InvalidArgument("need at least one walk".into()));
    }
    if depth_x < 1 || depth_x > OVERSHOOT_MAX_DEPTH {
        return Err(TheoryError::InvalidArgument(format!(
            "depth {depth_x} outside 1..={OVERSHOOT_MAX_DEPTH}"
        )));
    }
    let bits = depth_x - 1;
    let mut total = 0.0f64;
    for path in 0u32..(1 << bits) {
        let a: Vec<u8> = (0..bits).map(|k| ((path >> k) & 1) as u8).collect();
        let mut z_seq = vec![z_after_failure];
        let mut prob = 1.0f64;
        for step in 0..bits as usize {
            let prefix = &a[..step];
            let zeta = thresholds.lookup(prefix, z_after_failure)?;
            // child constraints relative to the parent threshold
            if step > 0 {
                let parent = thresholds.lookup(&a[..step - 1], z_after_failure)?;
                if a[step - 1] == 1 && zeta <= parent {
                    return Err(TheoryError::ThresholdConstraint(prefix.to_vec()));
                }
                if a[step - 1] == 0 && zeta > 2 * parent {
                    return Err(TheoryError::ThresholdConstraint(prefix.to_vec()));
                }
            }
            let z_prev = *z_seq.last().unwrap();
            if a[step] == 1 {
                let h = overshoot_history(&z_seq, z_after_failure, t_first_fork, params);
                let p_bar = fork_prob_bound(&h, params)?.value;
                prob *= doubling_tail(z_prev, zeta, p_bar);
                z_seq.push(2 * z_prev);
            } else {
                z_seq.push(zeta);
            }
            if prob == 0.0 {
                break;
            }
        }
        if prob == 0.0 {
            continue;
        }
        let h = overshoot_history(&z_seq, z_after_failure, t_first_fork, params);
        let p_bar = fork_prob_bound(&h, params)?.value;
        let z_last = *z_seq.last().unwrap() as f64;
        total += prob * (z_last + z_last * p_bar);
    }
    Ok(total)
}
