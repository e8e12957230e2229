//! Causal effect estimation with instrumental processes.
//!
//! Both model classes share one object, the integrated covariance
//! `C = (I − Φ)⁻¹ Θ (I − Φ)⁻ᵀ`, from which normalized effects
//! `(I − Φ_BB)⁻¹ Φ_BA` are read off through instrument blocks of `C`.
//! Node labels are 1-based throughout the public API.

pub mod bench;
pub mod error;
pub mod graph;
pub mod hawkes;
pub mod io;
pub mod iv;
pub mod linalg;
pub mod lrcov;
pub mod var;

pub use error::{Error, Result};
pub use graph::{check_instrument, CausalGraph, NodeSet, ValidityReport};
pub use hawkes::{
    estimate_hawkes_cumulants, hawkes_integrated_cov, hawkes_stationary_rates, simulate_hawkes, EventLog,
    HawkesParams,
};
pub use iv::{iv_estimate, iv_estimate_events, iv_estimate_series, Diagnostics, EstimationResult, IvProblem, Method};
pub use lrcov::{long_run_cov, Bandwidth, Kernel, LrcovConfig};
pub use var::{
    integrated_cov, normalize, normalized_effect, simulate_var, var_integrated_cov, IntCov, Provenance, SeriesData,
    VarParams,
};
