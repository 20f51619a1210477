//! Expected-Shortfall-targeted dynamic asset allocation.
//!
//! A mean-variance problem with return-target and budget equality constraints
//! is compiled into a QUBO over binary-encoded weights, solved by an exhaustive
//! or simulated-annealing backend, and wrapped in an outer loop that adjusts the
//! return target until the portfolio's empirical Expected Shortfall matches a
//! volatility-scaled target.

pub mod allocator;
pub mod cli;
pub mod config;
pub mod encoding;
pub mod market_data;
pub mod qubo;
pub mod risk;
pub mod solver;

pub use allocator::{allocate_series, allocate_window, AllocationRecord, AllocatorConfig, IterationTrace};
pub use encoding::{decode, encode_nearest, BitVector, Encoding};
pub use market_data::{load_returns, window_stats, windows, ReturnsPanel, WindowSpec, WindowStats};
pub use qubo::{build, default_penalties, QuboJson, QuboProblem};
pub use risk::{converged, es_target, expected_shortfall, value_at_risk, RiskConfig};
pub use solver::{solve, solve_annealing, solve_exhaustive, Backend, BitSolution, SolveRequest};
