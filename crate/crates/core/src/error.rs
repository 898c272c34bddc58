use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric argument is outside the domain of the operation.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data (keys, truth labels, files) is inconsistent.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A key-set or truth record could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An exact integer result does not fit in 128 bits.
    #[error("integer overflow: {0}")]
    Overflow(String),

    /// The exact oracle refuses inputs above its cost guard.
    #[error("refused: {0}")]
    Refused(String),

    /// No parameter choice satisfies the requested targets.
    #[error("infeasible: {0}")]
    Infeasible(Infeasible),
}

/// Carries the tightest values that were achievable when a target could not be met.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasible {
    pub reason: String,
    /// Smallest revelation bound reachable at the largest key length searched.
    pub achievable_revelation: Option<f64>,
    /// Largest lower bound on the probability of error-free matching reachable.
    pub achievable_confidence: Option<f64>,
    /// Largest key length that was tried.
    pub max_n: Option<u64>,
}

impl std::fmt::Display for Infeasible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.reason)?;
        if let Some(n) = self.max_n {
            write!(f, " (searched up to n={n})")?;
        }
        if let Some(r) = self.achievable_revelation {
            write!(f, "; achievable revelation bound {r:.6e}")?;
        }
        if let Some(c) = self.achievable_confidence {
            write!(f, "; achievable matching confidence {c:.6e}")?;
        }
        Ok(())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_flip_prob(p_f: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&p_f) {
        return Err(invalid(format!("flip probability {p_f} outside [0, 0.5]")));
    }
    Ok(())
}
