//! Binomial pmf and interval probabilities in log space.
//!
//! The pmf uses the saddle-point form
//! `ln b(k; n, p) = δ(n) − δ(k) − δ(n−k) − D(k, np) − D(n−k, nq) − ½ ln(2π k (n−k) / n)`
//! where `δ` is the Stirling-series error of `ln Γ(x+1)` and `D(x, μ) = x ln(x/μ) + μ − x`
//! is evaluated with a series when `x ≈ μ`. Every piece is small or well
//! conditioned, so the log probability carries an absolute error of a few ulps
//! of the largest term instead of the cancellation error of `ln Γ` differences.

pub mod exact;

use std::cmp::Ordering;

use crate::error::{invalid, Result};

/// Natural logarithm of a probability; `-inf` is probability zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    /// Wraps a log value, clamping tiny positive rounding excursions to 0.
    pub fn new(ln: f64) -> Self {
        debug_assert!(!ln.is_nan(), "NaN log-probability");
        LogProb(ln.min(0.0))
    }

    pub fn from_prob(p: f64) -> Self {
        LogProb::new(p.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    /// `1 − p`, accurate when `p` is close to 0 or close to 1.
    pub fn complement(self) -> LogProb {
        if self.0 > -std::f64::consts::LN_2 {
            LogProb::new((-self.0.exp_m1()).ln())
        } else {
            LogProb::new((-self.0.exp()).ln_1p())
        }
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln k! − [(k + ½) ln k − k + ½ ln 2π]` for k = 1..=64.
#[allow(clippy::excessive_precision)]
const STIRLING_ERR: [f64; 64] = [
    0.08106146679532725821967,
    0.04134069595540929409382,
    0.02767792568499833914879,
    0.02079067210376509311152,
    0.01664469118982119216319,
    0.01387612882307074799875,
    0.01189670994589177009506,
    0.01041126526197209649748,
    0.009255462182712732917729,
    0.008330563433362871256469,
    0.007573675487951840794972,
    0.006942840107209529865664,
    0.00640899418800420706844,
    0.005951370112758847735624,
    0.005554733551962801371039,
    0.005207655919609640440718,
    0.004901395948434737860717,
    0.004629153749334028592427,
    0.004385560249232324268288,
    0.004166319691996922457463,
    0.003967954218640859617288,
    0.003787618068444434577867,
    0.003622960224683094707381,
    0.003472021382978766962945,
    0.003333155636728092875807,
    0.003204970228055038011184,
    0.003086278682608777063256,
    0.002976063983550408826021,
    0.002873449362352466387552,
    0.002777674929752693603595,
    0.002688078828531142867802,
    0.002604081919251656422419,
    0.002525175249756784364002,
    0.002450909735438118343142,
    0.002380887608234111985728,
    0.002314755290514683866814,
    0.002252197424337523742169,
    0.002192931843287834061024,
    0.002136705317752500195808,
    0.002083289938302421748749,
    0.002032480028256630669288,
    0.001984089497245795550019,
    0.001937949563995799461992,
    0.001893906789600634536901,
    0.001851821372993179516432,
    0.001811565668719630626983,
    0.001773022893912853868077,
    0.001736085996876597314982,
    0.001700656664196061708192,
    0.001666644446983365509949,
    0.001633965989907857695481,
    0.001602544349176320672132,
    0.001572308387716159704966,
    0.001543192237554763675286,
    0.001515134820843602919724,
    0.00148807942219713738351,
    0.001461973306045267715379,
    0.001436767373567118932068,
    0.001412415854510449022615,
    0.001388876029827013264717,
    0.00136610798158789604904,
    0.001344074367099040456088,
    0.001322740214528256115665,
    0.001302072737691049536271,
];

fn stirling_err(k: u64) -> f64 {
    debug_assert!(k >= 1);
    if k <= 64 {
        return STIRLING_ERR[(k - 1) as usize];
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let x = k as f64;
    let xx = x * x;
    (S0 - (S1 - (S2 - (S3 - S4 / xx) / xx) / xx) / xx) / x
}

/// Deviance term `x ln(x/μ) + μ − x`, stable for `x ≈ μ`.
fn deviance(x: f64, mu: f64) -> f64 {
    if (x - mu).abs() < 0.1 * (x + mu) {
        let mut v = (x - mu) / (x + mu);
        let mut s = (x - mu) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let next = s + ej / f64::from(2 * j + 1);
            if next == s {
                return next;
            }
            s = next;
        }
        return s;
    }
    x * (x / mu).ln() + mu - x
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// `ln b(k; n, p)` with `p` already validated and `k ≤ n`.
fn ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let q = 1.0 - p;
    let nf = n as f64;
    if k == 0 {
        return nf * (-p).ln_1p();
    }
    if k == n {
        return if p > 0.5 { nf * (-q).ln_1p() } else { nf * p.ln() };
    }
    let kf = k as f64;
    let rest = (n - k) as f64;
    let lc = stirling_err(n)
        - stirling_err(k)
        - stirling_err(n - k)
        - deviance(kf, nf * p)
        - deviance(rest, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln b(k; n, p) = ln [C(n, k) p^k (1−p)^(n−k)]`.
pub fn log_binom_pmf(k: u64, n: u64, p: f64) -> Result<LogProb> {
    check_p(p)?;
    if k > n {
        return Err(invalid(format!("k = {k} exceeds n = {n}")));
    }
    Ok(LogProb::new(ln_pmf(k, n, p)))
}

/// Terms further than this many nats below the largest are dropped. With at
/// most 2^32 dropped terms the neglected mass is below 1e-30 relative.
const TRUNCATE_NATS: f64 = 92.0;

fn mode(n: u64, p: f64) -> u64 {
    (((n + 1) as f64 * p).floor() as u64).min(n)
}

/// Direct log-space sum of the pmf over `[lo, hi]` (non-empty, validated).
///
/// Starts at the point of the interval nearest the mode and walks outward;
/// the pmf is unimodal so terms shrink monotonically in both directions.
/// Retained terms are added smallest first.
fn ln_sum_direct(lo: u64, hi: u64, n: u64, p: f64) -> f64 {
    let peak = mode(n, p).clamp(lo, hi);
    let top = ln_pmf(peak, n, p);
    if top == f64::NEG_INFINITY {
        return top;
    }
    let floor = top - TRUNCATE_NATS;
    let mut rel = Vec::new();
    let mut k = peak;
    while k > lo {
        k -= 1;
        let l = ln_pmf(k, n, p);
        if l < floor {
            break;
        }
        rel.push(l - top);
    }
    let mut k = peak;
    while k < hi {
        k += 1;
        let l = ln_pmf(k, n, p);
        if l < floor {
            break;
        }
        rel.push(l - top);
    }
    rel.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let tail: f64 = rel.iter().map(|d| d.exp()).sum();
    top + tail.ln_1p()
}

fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln B(k_o, k_f; n, p)`, the log probability that a Binomial(n, p) variable
/// lies in `[k_o, k_f]`. An empty interval (`k_o > k_f`) has probability 0.
///
/// When the interval holds the mode, the two complementary tails are summed
/// instead and the result is `ln(1 − tails)` via `ln_1p`, which keeps full
/// relative accuracy in the deficit `1 − B` when `B` is near 1.
pub fn binom_range_prob(k_o: u64, k_f: u64, n: u64, p: f64) -> Result<LogProb> {
    check_p(p)?;
    if k_f > n {
        return Err(invalid(format!("upper end {k_f} exceeds n = {n}")));
    }
    if k_o > k_f {
        return Ok(LogProb::ZERO);
    }
    if k_o == 0 && k_f == n {
        return Ok(LogProb::ONE);
    }
    if p == 0.0 || p == 1.0 {
        let atom = if p == 0.0 { 0 } else { n };
        return Ok(if (k_o..=k_f).contains(&atom) {
            LogProb::ONE
        } else {
            LogProb::ZERO
        });
    }
    let m = mode(n, p);
    if (k_o..=k_f).contains(&m) {
        let lower = if k_o > 0 {
            ln_sum_direct(0, k_o - 1, n, p)
        } else {
            f64::NEG_INFINITY
        };
        let upper = if k_f < n {
            ln_sum_direct(k_f + 1, n, n, p)
        } else {
            f64::NEG_INFINITY
        };
        let tails = ln_add(lower, upper);
        if tails < -std::f64::consts::LN_2 {
            return Ok(LogProb::new((-tails.exp()).ln_1p()));
        }
    }
    Ok(LogProb::new(ln_sum_direct(k_o, k_f, n, p)))
}

/// `P(X ≤ k)` for `X ~ Binomial(n, p)`.
pub fn binom_cdf(k: u64, n: u64, p: f64) -> Result<LogProb> {
    binom_range_prob(0, k.min(n), n, p)
}

/// `P(X ≥ k)` for `X ~ Binomial(n, p)`.
pub fn binom_sf(k: u64, n: u64, p: f64) -> Result<LogProb> {
    binom_range_prob(k, n, n, p)
}
