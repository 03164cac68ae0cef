//! Constellation design and simulation for digital over-the-air computation.
//!
//! `K` nodes each quantize an input to one of `q` levels and transmit the
//! level's symbol `x[l]` simultaneously; the receiver sees the superposition
//! and must recover `f(s_1, ..., s_K)` for a symmetric aggregation `f`. The
//! crate enumerates the input profiles, designs `x` so that profiles with
//! different values stay apart under a noise-aware metric, and measures the
//! resulting computation error by Monte Carlo.
//!
//! ```
//! use oaccomp::{design, AggregationFunction, ConstraintSet, DesignProblem, DistanceMetric,
//!               QuantizedAlphabet, SolverConfig, DEFAULT_PROFILE_CAP};
//!
//! let set = ConstraintSet::from_function(
//!     &AggregationFunction::max(), 2, &QuantizedAlphabet::uniform(2), DEFAULT_PROFILE_CAP,
//! ).unwrap();
//! let cfg = SolverConfig { restarts: 2, ..SolverConfig::default() };
//! let result = design(&DesignProblem::new(set, DistanceMetric::Euclidean), &cfg).unwrap();
//! assert!(result.feasible && result.margin > 0.0);
//! ```

pub mod channel;
pub mod designer;
pub mod error;
pub mod function_model;
pub mod metrics;
pub mod receiver;
pub mod simulator;

pub use channel::{fading_gram, sample_noise, transmit, FadingGenerator, FadingModel, NoiseModel};
pub use designer::{
    design, evaluate_design, log_sum_exp, mse_surrogate, pam_oracle, parse_columns,
    smoothed_mse_design, verify_feasibility, DesignProblem, DesignResult, FeasibilityReport,
    MarginKind, ModulationVector, SolverConfig, SolverReport, SurrogateValue, FEASIBILITY_TOL,
};
pub use error::{Error, Result};
pub use function_model::{
    build_constraints, enumerate_profiles, enumerate_profiles_capped, superimpose,
    AggregationFunction, AggregationKind, ConstraintPair, ConstraintSet, InputProfile,
    QuantizedAlphabet, DEFAULT_PROFILE_CAP,
};
pub use metrics::{distance, q_function, tail_bound, DistanceMetric, TailBound};
pub use receiver::{build_codebook, decode, decode_with, quantize_output, Codebook, DecodeRule};
pub use simulator::{
    compare_designs, run_mse, sweep, Comparison, ErrorEstimate, InputLaw, SimulationConfig,
    SweepAxis, SweepResult,
};
