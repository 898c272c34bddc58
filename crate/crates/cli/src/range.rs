//! Sweep list syntax: comma-separated items, each a value or an inclusive
//! range `a..b` with an optional `:step` (integers default to step 1).

/// A parsed integer sweep list.
#[derive(Debug, Clone, PartialEq)]
pub struct U64List(pub Vec<u64>);

/// A parsed real sweep list.
#[derive(Debug, Clone, PartialEq)]
pub struct F64List(pub Vec<f64>);

pub fn u64_list(s: &str) -> Result<U64List, String> {
    parse_u64_list(s).map(U64List)
}

pub fn f64_list(s: &str) -> Result<F64List, String> {
    parse_f64_list(s).map(F64List)
}

fn split_range(item: &str) -> Option<(&str, &str, Option<&str>)> {
    let (lo, rest) = item.split_once("..")?;
    match rest.split_once(':') {
        Some((hi, step)) => Some((lo, hi, Some(step))),
        None => Some((lo, rest, None)),
    }
}

pub fn parse_u64_list(s: &str) -> Result<Vec<u64>, String> {
    let num = |x: &str| {
        x.trim()
            .replace('_', "")
            .parse::<u64>()
            .map_err(|_| format!("{x:?} is not a non-negative integer"))
    };
    let mut out = Vec::new();
    for item in s.split(',') {
        match split_range(item) {
            Some((lo, hi, step)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                let step = step.map(num).transpose()?.unwrap_or(1);
                if step == 0 || lo > hi {
                    return Err(format!("empty range {item:?}"));
                }
                out.extend((lo..=hi).step_by(step as usize));
            }
            None => out.push(num(item)?),
        }
    }
    Ok(out)
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    let num = |x: &str| {
        let v = x
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("{x:?} is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{x:?} is not finite"))
        }
    };
    let mut out = Vec::new();
    for item in s.split(',') {
        match split_range(item) {
            Some((lo, hi, step)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                let step = num(step.ok_or_else(|| format!("range {item:?} needs a :step"))?)?;
                if step.is_nan() || step <= 0.0 || lo > hi {
                    return Err(format!("empty range {item:?}"));
                }
                // Index-based to avoid accumulating error; 12 significant
                // digits strips the residue of a + k·step.
                let count = ((hi - lo) / step + 1e-9).floor() as u64;
                for k in 0..=count {
                    let v: f64 = format!("{:.11e}", lo + k as f64 * step).parse().unwrap();
                    out.push(v);
                }
            }
            None => out.push(num(item)?),
        }
    }
    Ok(out)
}
