//! Sweep data for the standard plots, rendered as CSV.
//!
//! Probabilities use 17 significant digits in scientific notation. Values
//! that do not exist for a grid point (for example no flip probability can
//! meet the target) are written as `nan`.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bounds::{missed_match_prob, mismatch_prob, pair_count, revelation_bound, CohortSpec};
use crate::error::{invalid, Error, Result};
use crate::planner::{min_flip_prob, min_key_length, optimize_pair_error, FlipStrategy, PlanOptions, Targets};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    RequiredBits,
    RevelationCurve,
    MinFlip,
    MismatchCurve,
    MissedCurve,
    PairError,
    PairCount,
}

impl FigureId {
    pub const ALL: [FigureId; 7] = [
        FigureId::RequiredBits,
        FigureId::RevelationCurve,
        FigureId::MinFlip,
        FigureId::MismatchCurve,
        FigureId::MissedCurve,
        FigureId::PairError,
        FigureId::PairCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::RequiredBits => "required-bits",
            FigureId::RevelationCurve => "revelation-curve",
            FigureId::MinFlip => "min-flip",
            FigureId::MismatchCurve => "mismatch-curve",
            FigureId::MissedCurve => "missed-curve",
            FigureId::PairError => "pair-error",
            FigureId::PairCount => "pair-count",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            FigureId::RequiredBits => "m,s,n_required",
            FigureId::RevelationCurve => "n,pf,p_r_bound",
            FigureId::MinFlip => "n,target,min_pf",
            FigureId::MismatchCurve => "n,t_fraction,p_m",
            FigureId::MissedCurve => "n,t_fraction,pf_used,p_u",
            FigureId::PairError => "n,s,pf_used,t_opt,p_w",
            FigureId::PairCount => "m,s,log10_pairs",
        }
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| invalid(format!("unknown figure id {s:?}")))
    }
}

/// Sweep inputs. Which lists are used depends on the figure:
///
/// | id | swept | single-valued |
/// |----|-------|---------------|
/// | required-bits | m, s | target, confidence |
/// | revelation-curve | n, pf | s |
/// | min-flip | n, targets | s |
/// | mismatch-curve | n, t_fractions | |
/// | missed-curve | n, t_fractions, pf (optional) | s, target when pf is absent |
/// | pair-error | n, s | target |
/// | pair-count | m, s | |
///
/// Empty lists count as missing. When a single-valued input is absent the
/// defaults are `s = 2`, `target = 0.05`, `confidence = 0.95`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FigureRequest {
    pub n: Vec<u64>,
    pub s: Vec<u64>,
    pub m: Vec<u64>,
    pub pf: Vec<f64>,
    pub targets: Vec<f64>,
    pub t_fractions: Vec<f64>,
    pub confidence: Option<f64>,
    pub grid: Option<u64>,
    pub max_n: Option<u64>,
}

fn sorted_u(v: &[u64], flag: &str) -> Result<Vec<u64>> {
    if v.is_empty() {
        return Err(invalid(format!("this figure needs --{flag}")));
    }
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

fn sorted_f(v: &[f64], flag: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(invalid(format!("this figure needs --{flag}")));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(invalid(format!("--{flag} value {x} is not finite")));
    }
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

fn single_u(v: &[u64], flag: &str, default: u64) -> Result<u64> {
    match v {
        [] => Ok(default),
        [x] => Ok(*x),
        _ => Err(invalid(format!("this figure takes a single --{flag} value"))),
    }
}

fn single_f(v: &[f64], flag: &str, default: f64) -> Result<f64> {
    match v {
        [] => Ok(default),
        [x] => Ok(*x),
        _ => Err(invalid(format!("this figure takes a single --{flag} value"))),
    }
}

fn grid<A: Copy + Sync, B: Copy + Sync>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

fn prob(x: f64) -> String {
    format!("{x:.16e}")
}

fn or_nan<T>(r: Result<T>, f: impl FnOnce(T) -> String) -> Result<String> {
    match r {
        Ok(v) => Ok(f(v)),
        Err(Error::Infeasible(_)) => Ok("nan".into()),
        Err(e) => Err(e),
    }
}

/// Threshold for a fraction of `n`: `ceil(fraction · n)` clamped into `[1, n]`.
pub fn threshold_for(n: u64, fraction: f64) -> u64 {
    ((fraction * n as f64).ceil() as u64).clamp(1, n)
}

impl FigureRequest {
    /// Rows for `id`, header included, sorted by the swept columns.
    pub fn render(&self, id: FigureId) -> Result<String> {
        let rows: Vec<String> = match id {
            FigureId::RequiredBits => {
                let target = single_f(&self.targets, "target", 0.05)?;
                let targets = Targets::new(target, self.confidence.unwrap_or(0.95))?;
                let options = PlanOptions {
                    grid_step: self.grid.unwrap_or(10),
                    max_n: self.max_n.unwrap_or(PlanOptions::default().max_n),
                    flip: FlipStrategy::Minimal,
                };
                let pts = grid(&sorted_u(&self.m, "m")?, &sorted_u(&self.s, "s")?);
                pts.par_iter()
                    .map(|&(m, s)| {
                        let cohort = CohortSpec::uniform(s as usize, m)?;
                        let n = or_nan(min_key_length(&cohort, targets, options), |p| p.n.to_string())?;
                        Ok(format!("{m},{s},{n}"))
                    })
                    .collect::<Result<_>>()?
            }
            FigureId::RevelationCurve => {
                let s = single_u(&self.s, "s", 2)?;
                let pts = grid(&sorted_u(&self.n, "n")?, &sorted_f(&self.pf, "pf")?);
                pts.par_iter()
                    .map(|&(n, pf)| Ok(format!("{n},{pf},{}", prob(revelation_bound(s, n, pf)?))))
                    .collect::<Result<_>>()?
            }
            FigureId::MinFlip => {
                let s = single_u(&self.s, "s", 2)?;
                let pts = grid(&sorted_u(&self.n, "n")?, &sorted_f(&self.targets, "targets")?);
                pts.par_iter()
                    .map(|&(n, target)| {
                        let pf = or_nan(min_flip_prob(s, n, target), prob)?;
                        Ok(format!("{n},{target},{pf}"))
                    })
                    .collect::<Result<_>>()?
            }
            FigureId::MismatchCurve => {
                let pts = grid(&sorted_u(&self.n, "n")?, &sorted_f(&self.t_fractions, "t-fraction")?);
                pts.par_iter()
                    .map(|&(n, frac)| {
                        let p = mismatch_prob(n, threshold_for(n, frac))?;
                        Ok(format!("{n},{frac},{}", prob(p)))
                    })
                    .collect::<Result<_>>()?
            }
            FigureId::MissedCurve => {
                let ns = sorted_u(&self.n, "n")?;
                let fracs = sorted_f(&self.t_fractions, "t-fraction")?;
                if self.pf.is_empty() {
                    let s = single_u(&self.s, "s", 2)?;
                    let target = single_f(&self.targets, "target", 0.05)?;
                    grid(&ns, &fracs)
                        .par_iter()
                        .map(|&(n, frac)| match min_flip_prob(s, n, target) {
                            Ok(pf) => {
                                let p = missed_match_prob(n, threshold_for(n, frac), pf)?;
                                Ok(format!("{n},{frac},{},{}", prob(pf), prob(p)))
                            }
                            Err(Error::Infeasible(_)) => Ok(format!("{n},{frac},nan,nan")),
                            Err(e) => Err(e),
                        })
                        .collect::<Result<_>>()?
                } else {
                    let pfs = sorted_f(&self.pf, "pf")?;
                    let pts: Vec<_> = grid(&ns, &fracs)
                        .into_iter()
                        .flat_map(|(n, f)| pfs.iter().map(move |&pf| (n, f, pf)))
                        .collect();
                    pts.par_iter()
                        .map(|&(n, frac, pf)| {
                            let p = missed_match_prob(n, threshold_for(n, frac), pf)?;
                            Ok(format!("{n},{frac},{},{}", prob(pf), prob(p)))
                        })
                        .collect::<Result<_>>()?
                }
            }
            FigureId::PairError => {
                let target = single_f(&self.targets, "target", 0.05)?;
                let pts = grid(&sorted_u(&self.n, "n")?, &sorted_u(&self.s, "s")?);
                pts.par_iter()
                    .map(|&(n, s)| match optimize_pair_error(s, n, target, FlipStrategy::Minimal) {
                        Ok((pf, t, p_w)) => Ok(format!("{n},{s},{},{t},{}", prob(pf), prob(p_w))),
                        Err(Error::Infeasible(_)) => Ok(format!("{n},{s},nan,nan,nan")),
                        Err(e) => Err(e),
                    })
                    .collect::<Result<_>>()?
            }
            FigureId::PairCount => {
                let pts = grid(&sorted_u(&self.m, "m")?, &sorted_u(&self.s, "s")?);
                pts.par_iter()
                    .map(|&(m, s)| {
                        let pairs = pair_count(&CohortSpec::uniform(s as usize, m)?)?;
                        Ok(format!("{m},{s},{}", prob((pairs as f64).log10())))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mut out = String::with_capacity(64 * (rows.len() + 1));
        let _ = writeln!(out, "{}", id.header());
        for r in rows {
            let _ = writeln!(out, "{r}");
        }
        Ok(out)
    }
}
