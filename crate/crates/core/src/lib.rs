//! Noisy hash keys for matching records across data sources that do not
//! trust one another.
//!
//! Each source hashes its values with a shared public hash, then flips every
//! bit independently with probability `p_f` before sending the result. A merge
//! process pairs keys from different sources whose Hamming distance is below a
//! threshold `t`. The crate provides the key pipeline ([`bitkeys`],
//! [`matcher`]), exact probability bounds for matching errors and hash-code
//! revelation ([`binomial`], [`bounds`]), parameter search ([`planner`]), and
//! a Monte Carlo harness that checks the bounds empirically ([`simulator`]).

pub mod binomial;
pub mod bitkeys;
pub mod bounds;
pub mod error;
pub mod figures;
pub mod matcher;
pub mod planner;
pub mod simulator;

pub use bitkeys::{hamming, median_key, Bits, HashCode, KeyRef, NoiseConfig, NoisyKey};
pub use bounds::{BoundSet, CohortSpec};
pub use matcher::{Cluster, MatchEdge, MatchReport};
pub use planner::{Plan, PlanOptions, Targets};
pub use simulator::{Scenario, TrialStats};
pub use error::{Error, Infeasible, Result};
