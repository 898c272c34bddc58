//! Choosing key length `n`, flip probability `p_f` and threshold `t`.
//!
//! The search runs in a fixed order: the smallest `p_f` that keeps the
//! revelation bound under its target, then the threshold that minimizes
//! `max(p_M, p_U)` at that `p_f`, then the smallest `n` on a grid for which
//! the resulting lower bound on error-free matching meets the confidence
//! target. Raising `p_f` above the minimum never lowers `p_M` (which does
//! not depend on it) and only raises `p_U`, so the minimum is the default;
//! [`FlipStrategy::JointSweep`] searches above it anyway.

use serde::{Deserialize, Serialize};

use crate::bounds::{bound_set, mismatch_log, missed_match_log, revelation_bound_log, BoundSet, CohortSpec};
use crate::error::{invalid, Error, Infeasible, Result};

/// Bisection stops once the bracket on `p_f` is narrower than this.
pub const FLIP_TOLERANCE: f64 = 1e-9;

/// Largest key length the length search will consider by default.
pub const DEFAULT_MAX_N: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    /// Upper limit on the revelation bound `max_z p_R(z)`.
    pub revelation_target: f64,
    /// Lower limit on the probability that every pair is matched correctly.
    pub matching_confidence: f64,
}

impl Targets {
    pub fn new(revelation_target: f64, matching_confidence: f64) -> Result<Self> {
        check_open_unit("revelation target", revelation_target)?;
        check_open_unit("matching confidence", matching_confidence)?;
        Ok(Targets {
            revelation_target,
            matching_confidence,
        })
    }
}

fn check_open_unit(what: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("{what} {x} must lie strictly between 0 and 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlipStrategy {
    /// Use the smallest `p_f` meeting the revelation target.
    Minimal,
    /// Also try `steps` evenly spaced values between that minimum and 0.5
    /// and keep whichever gives the smallest `max(p_M, p_U)`.
    JointSweep { steps: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    /// Candidate key lengths are multiples of this.
    pub grid_step: u64,
    pub max_n: u64,
    pub flip: FlipStrategy,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            grid_step: 10,
            max_n: DEFAULT_MAX_N,
            flip: FlipStrategy::Minimal,
        }
    }
}

/// A parameter choice and the bounds that justify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub n: u64,
    pub p_f: f64,
    pub t: u64,
    pub bounds: BoundSet,
    pub targets: Targets,
}

impl Plan {
    pub fn meets_targets(&self) -> bool {
        self.bounds.p_r_max <= self.targets.revelation_target
            && self.bounds.prob_all_correct_lb >= self.targets.matching_confidence
    }
}

/// Smallest `p_f ∈ [0, 0.5]` with `max_{z ≤ s} p_R(z) ≤ target`.
///
/// The returned value always satisfies the target and is within
/// [`FLIP_TOLERANCE`] of the exact boundary.
pub fn min_flip_prob(s: u64, n: u64, target: f64) -> Result<f64> {
    check_open_unit("revelation target", target)?;
    if n == 0 || s == 0 {
        return Err(invalid("n and s must be at least 1"));
    }
    let ln_target = target.ln();
    let ok = |p_f: f64| -> Result<bool> { Ok(revelation_bound_log(s, n, p_f)?.1.ln() <= ln_target) };
    if !ok(0.5)? {
        let achievable = revelation_bound_log(s, n, 0.5)?.1.prob();
        return Err(Error::Infeasible(Infeasible {
            reason: format!(
                "revelation target {target:e} unreachable with {n}-bit keys and {s} sources even at p_f = 0.5"
            ),
            achievable_revelation: Some(achievable),
            achievable_confidence: None,
            max_n: Some(n),
        }));
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > FLIP_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Threshold `t ∈ 1..=n` minimizing `max(p_M, p_U)`, smallest `t` on ties,
/// with the minimized bound.
///
/// `p_M` is nondecreasing and `p_U` nonincreasing in `t`, so the optimum
/// sits at their crossover, found by binary search.
pub fn best_threshold(n: u64, p_f: f64) -> Result<(u64, f64)> {
    if n == 0 {
        return Err(invalid("key length must be at least 1 bit"));
    }
    let pm = |t: u64| mismatch_log(n, t).map(|l| l.ln());
    let pu = |t: u64| missed_match_log(n, t, p_f).map(|l| l.ln());
    let worst = |t: u64| -> Result<f64> { Ok(pm(t)?.max(pu(t)?)) };

    // Smallest t with p_M(t) >= p_U(t); t = n always qualifies.
    let (mut lo, mut hi) = (1u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pm(mid)? >= pu(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut best_t = lo;
    let mut best = worst(lo)?;
    if lo > 1 {
        let left = worst(lo - 1)?;
        if left <= best {
            best_t = lo - 1;
            best = left;
        }
    }
    while best_t > 1 && worst(best_t - 1)? == best {
        best_t -= 1;
    }
    Ok((best_t, best.exp()))
}

/// Flip probability, threshold and per-pair bound at one `(s, n)`.
pub fn optimize_pair_error(s: u64, n: u64, revelation_target: f64, flip: FlipStrategy) -> Result<(f64, u64, f64)> {
    let p_min = min_flip_prob(s, n, revelation_target)?;
    let (t, p_w) = best_threshold(n, p_min)?;
    let mut best = (p_min, t, p_w);
    if let FlipStrategy::JointSweep { steps } = flip {
        for i in 1..=steps {
            let p_f = p_min + (0.5 - p_min) * f64::from(i) / f64::from(steps);
            let (t, p_w) = best_threshold(n, p_f)?;
            if p_w < best.2 {
                best = (p_f, t, p_w);
            }
        }
    }
    Ok(best)
}

/// Optimized per-pair error bound `max(p_M, p_U)` at minimal `p_f` and best `t`.
pub fn pairwise_error_at(s: u64, n: u64, revelation_target: f64) -> Result<f64> {
    Ok(optimize_pair_error(s, n, revelation_target, FlipStrategy::Minimal)?.2)
}

/// Plan at a fixed key length; the confidence target is recorded but not enforced.
pub fn plan_at_length(cohort: &CohortSpec, n: u64, targets: Targets, flip: FlipStrategy) -> Result<Plan> {
    let s = cohort.sources() as u64;
    let (p_f, t, _) = optimize_pair_error(s, n, targets.revelation_target, flip)?;
    Ok(Plan {
        n,
        p_f,
        t,
        bounds: bound_set(cohort, n, t, p_f)?,
        targets,
    })
}

/// Smallest `n` on the grid whose plan meets both targets.
///
/// Doubles the grid index from one step until a feasible length appears,
/// then bisects between the last failure and the first success.
pub fn min_key_length(cohort: &CohortSpec, targets: Targets, options: PlanOptions) -> Result<Plan> {
    if options.grid_step == 0 {
        return Err(invalid("grid step must be at least 1"));
    }
    if options.max_n < options.grid_step {
        return Err(invalid("maximum key length is below one grid step"));
    }
    let step = options.grid_step;
    let max_index = options.max_n / step;
    let try_index = |i: u64| -> Result<Option<Plan>> {
        match plan_at_length(cohort, i * step, targets, options.flip) {
            Ok(plan) if plan.meets_targets() => Ok(Some(plan)),
            Ok(_) | Err(Error::Infeasible(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let mut failed = 0u64;
    let mut index = 1u64;
    let found = loop {
        if let Some(plan) = try_index(index)? {
            break (index, plan);
        }
        failed = index;
        if index == max_index {
            return Err(infeasible_at(cohort, options.max_n - options.max_n % step, targets, options));
        }
        index = (index * 2).min(max_index);
    };
    let (mut good, mut plan) = found;
    while good - failed > 1 {
        let mid = failed + (good - failed) / 2;
        match try_index(mid)? {
            Some(p) => {
                good = mid;
                plan = p;
            }
            None => failed = mid,
        }
    }
    Ok(plan)
}

fn infeasible_at(cohort: &CohortSpec, n: u64, targets: Targets, options: PlanOptions) -> Error {
    let s = cohort.sources() as u64;
    let achievable_revelation = revelation_bound_log(s, n, 0.5).ok().map(|(_, l)| l.prob());
    let achievable_confidence = plan_at_length(cohort, n, targets, options.flip)
        .ok()
        .map(|p| p.bounds.prob_all_correct_lb);
    Error::Infeasible(Infeasible {
        reason: format!(
            "no key length up to {n} meets revelation target {:e} and matching confidence {}",
            targets.revelation_target, targets.matching_confidence
        ),
        achievable_revelation,
        achievable_confidence,
        max_n: Some(n),
    })
}

/// Default plan: grid step 10, minimal flip probability.
pub fn make_plan(cohort: &CohortSpec, revelation_target: f64, matching_confidence: f64) -> Result<Plan> {
    let targets = Targets::new(revelation_target, matching_confidence)?;
    min_key_length(cohort, targets, PlanOptions::default())
}
