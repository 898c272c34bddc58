//! Exact binomial interval probabilities over arbitrary-precision rationals.
//!
//! Slow by design and independent of the log-space code path; used to
//! validate it.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{invalid, Error, Result};

/// Largest `n` the exact routines accept.
pub const MAX_EXACT_N: u64 = 1000;

fn check(n: u64, p_num: u64, p_den: u64) -> Result<()> {
    if n > MAX_EXACT_N {
        return Err(Error::Refused(format!(
            "exact binomial with n = {n} exceeds the cost guard of {MAX_EXACT_N}"
        )));
    }
    if p_den == 0 || p_num > p_den {
        return Err(invalid(format!("p = {p_num}/{p_den} is not in [0, 1]")));
    }
    Ok(())
}

/// Exact `B(k_o, k_f; n, p_num / p_den)`; an empty interval gives 0.
pub fn binom_range_prob_exact(
    k_o: u64,
    k_f: u64,
    n: u64,
    p_num: u64,
    p_den: u64,
) -> Result<BigRational> {
    check(n, p_num, p_den)?;
    if k_f > n {
        return Err(invalid(format!("upper end {k_f} exceeds n = {n}")));
    }
    if k_o > k_f {
        return Ok(BigRational::zero());
    }
    let a = BigUint::from(p_num);
    let b = BigUint::from(p_den - p_num);
    // Σ C(n,k) a^k b^(n-k), with C(n,k) and a^k updated incrementally.
    let mut b_pow = Vec::with_capacity(n as usize + 1);
    b_pow.push(BigUint::one());
    for i in 1..=n as usize {
        let next = &b_pow[i - 1] * &b;
        b_pow.push(next);
    }
    let mut coeff = BigUint::one();
    let mut a_pow = BigUint::one();
    let mut numer = BigUint::zero();
    for k in 0..=k_f {
        if k >= k_o {
            numer += &coeff * &a_pow * &b_pow[(n - k) as usize];
        }
        coeff = coeff * (n - k) / (k + 1);
        a_pow *= &a;
    }
    let denom = BigUint::from(p_den).pow(n as u32);
    Ok(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
}

/// Exact `b(k; n, p_num / p_den)`.
pub fn binom_pmf_exact(k: u64, n: u64, p_num: u64, p_den: u64) -> Result<BigRational> {
    binom_range_prob_exact(k, k, n, p_num, p_den)
}

/// Natural log of a non-negative rational, accurate to a few ulps even when
/// the value is far outside the `f64` range. Zero maps to `-inf`.
pub fn ln_rational(r: &BigRational) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    assert!(
        (*r.numer() > BigInt::zero()) == (*r.denom() > BigInt::zero()),
        "logarithm of a negative rational"
    );
    ln_big(r.numer()) - ln_big(r.denom())
}

fn ln_big(x: &BigInt) -> f64 {
    let x = x.magnitude();
    let bits = x.bits();
    let shift = bits.saturating_sub(64);
    let top = (x >> shift).to_f64().expect("64-bit value fits");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}
