//! Evidence estimation by nested sampling and its competitors.
//!
//! Log-domain values throughout; see [`LogValue`].

pub mod alt;
pub mod constrained;
pub mod diagnostics;
pub mod error;
pub mod logval;
pub mod model;
pub mod models;
pub mod nested;
pub mod nested_is;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use logval::{log_diff_exp, log_sum_exp, LogValue};
pub use model::Model;
pub use nested::{evidence_deterministic, run_nested, NSConfig, NSRun, Scheme, StopRule};
pub use rng::RandomSource;
