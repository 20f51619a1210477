//! Per-window outer loop: solve the QUBO, measure the portfolio's Expected
//! Shortfall, and nudge the return target until the ES lands in the band
//! around the dynamic target.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{decode, BitVector, Encoding, EncodingError};
use crate::market_data::{window_stats, windows, MarketDataError, ReturnsPanel, WindowSpec, WindowStats};
use crate::qubo::{build, default_penalties, QuboError};
use crate::risk::{converged, es_target, expected_shortfall, RiskConfig, RiskError};
use crate::solver::{solve_with, SolverError, SolverSettings};

/// Starting return target used when the window's mean return is not positive.
pub const RHO_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AllocatorError {
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error("invalid allocator config: {0}")]
    BadConfig(String),
    #[error("window returns are {rows}x{cols} but stats describe {n} assets")]
    Dimension { rows: usize, cols: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocatorConfig {
    pub eta: f64,
    pub rho_step: f64,
    pub max_iters: usize,
    pub bits_per_weight: usize,
    pub solver: SolverSettings,
    pub risk: RiskConfig,
    /// `(budget, return)` penalty override; recomputed per iteration when `None`.
    pub penalties: Option<(f64, f64)>,
}

impl AllocatorConfig {
    /// Config with the default tolerance (0.05), step (0.05), 60 iterations, 4 bits per weight.
    pub fn new(risk: RiskConfig) -> Self {
        Self {
            eta: 0.05,
            rho_step: 0.05,
            max_iters: 60,
            bits_per_weight: 4,
            solver: SolverSettings::default(),
            risk,
            penalties: None,
        }
    }

    pub fn validate(&self) -> Result<(), AllocatorError> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(AllocatorError::BadConfig(format!("eta must be in (0, 1), got {}", self.eta)));
        }
        if !(self.rho_step > 0.0 && self.rho_step < 1.0) {
            return Err(AllocatorError::BadConfig(format!(
                "rho_step must be in (0, 1), got {}",
                self.rho_step
            )));
        }
        if self.max_iters == 0 {
            return Err(AllocatorError::BadConfig("max_iters must be >= 1".into()));
        }
        if let Some((b, r)) = self.penalties {
            if !(b >= 0.0 && r >= 0.0 && b.is_finite() && r.is_finite()) {
                return Err(AllocatorError::BadConfig(format!("penalties must be >= 0, got ({b}, {r})")));
            }
        }
        Ok(())
    }
}

/// Where the realized ES sits relative to the tolerance band around the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    /// Too much tail risk: lower the return target.
    Above,
    Within,
    /// Too little tail risk: raise the return target.
    Below,
}

impl Band {
    /// Classifies by `ES / EST`. With both negative this is exactly the
    /// `|ES| / |EST|` comparison; a non-negative ES (no tail loss) counts as
    /// below the band.
    pub fn classify(realized_es: f64, target_es: f64, eta: f64) -> Band {
        let signed = realized_es / target_es;
        if signed > 1.0 + eta {
            Band::Above
        } else if signed < 1.0 - eta {
            Band::Below
        } else {
            Band::Within
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub rho: f64,
    /// Step size in force when this iteration's ρ update was computed.
    pub rho_step: f64,
    pub penalty_budget: f64,
    pub penalty_return: f64,
    pub bits: BitVector,
    pub weights: Vec<f64>,
    pub energy: f64,
    pub realized_es: f64,
    pub target_es: f64,
    pub ratio: f64,
    pub band: Band,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub window_index: usize,
    pub start: usize,
    pub end: usize,
    pub weights: Vec<f64>,
    pub cash_weight: f64,
    pub realized_es: f64,
    pub target_es: f64,
    pub converged: bool,
    /// Mean of the window's asset means, before any flooring.
    pub mean_return: f64,
    /// True when `mean_return <= 0` and the loop started from [`RHO_FLOOR`].
    pub rho_floored: bool,
    pub trace: Vec<IterationTrace>,
}

impl AllocationRecord {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Portfolio return series `Σ_i w_i r_(i,t)`.
pub fn portfolio_returns(weights: &[f64], returns: &[Vec<f64>]) -> Vec<f64> {
    let periods = returns.first().map_or(0, Vec::len);
    (0..periods)
        .map(|t| weights.iter().zip(returns).map(|(w, row)| w * row[t]).sum())
        .collect()
}

/// Runs the ES-targeting loop on one window.
///
/// `window_returns` is the N x W block the statistics were computed from; the
/// realized ES is measured in-sample on it.
pub fn allocate_window(
    stats: &WindowStats,
    window_returns: &[Vec<f64>],
    config: &AllocatorConfig,
) -> Result<AllocationRecord, AllocatorError> {
    config.validate()?;
    let n = stats.mu.len();
    let cols = window_returns.first().map_or(0, Vec::len);
    if window_returns.len() != n || cols == 0 || window_returns.iter().any(|r| r.len() != cols) {
        return Err(AllocatorError::Dimension {
            rows: window_returns.len(),
            cols,
            n,
        });
    }
    let enc = Encoding::new(n, config.bits_per_weight)?;
    let target = es_target(&config.risk, stats.benchmark_sigma)?;

    let mean_return = stats.mu.iter().sum::<f64>() / n as f64;
    let rho_floored = mean_return <= 0.0;
    let mut rho = if rho_floored { RHO_FLOOR } else { mean_return };
    let mut step = config.rho_step;
    let mut trace: Vec<IterationTrace> = Vec::new();

    for iteration in 0..config.max_iters {
        let (penalty_budget, penalty_return) = config
            .penalties
            .unwrap_or_else(|| default_penalties(&stats.cov, &stats.mu, rho));
        let problem = build(&enc, &stats.cov, &stats.mu, rho, penalty_budget, penalty_return)?;
        let solution = solve_with(&problem, &config.solver)?;
        let weights = decode(&enc, &solution.x)?;
        let realized = expected_shortfall(&portfolio_returns(&weights, window_returns), config.risk.alpha)?;
        let band = Band::classify(realized, target, config.eta);

        if band != Band::Within {
            if let Some(prev) = trace.last() {
                if prev.band != Band::Within && prev.band != band {
                    // Overshot the band since the previous iteration.
                    step *= 0.5;
                }
            }
        }
        trace.push(IterationTrace {
            iteration,
            rho,
            rho_step: step,
            penalty_budget,
            penalty_return,
            bits: solution.x,
            weights,
            energy: solution.energy,
            realized_es: realized,
            target_es: target,
            ratio: realized.abs() / target.abs(),
            band,
            backend: solution.backend_name,
        });
        match band {
            Band::Within => break,
            Band::Above => rho *= 1.0 - step,
            Band::Below => rho *= 1.0 + step,
        }
    }

    let last = trace.last().expect("max_iters >= 1");
    let weights = last.weights.clone();
    Ok(AllocationRecord {
        window_index: stats.window_index,
        start: 0,
        end: cols,
        cash_weight: 1.0 - weights.iter().sum::<f64>(),
        weights,
        realized_es: last.realized_es,
        target_es: target,
        converged: last.band == Band::Within && converged(last.realized_es, target, config.eta)?,
        mean_return,
        rho_floored,
        trace,
    })
}

/// One record per rolling window, in window order. Windows are independent
/// and are processed in parallel.
pub fn allocate_series(
    panel: &ReturnsPanel,
    spec: WindowSpec,
    config: &AllocatorConfig,
) -> Result<Vec<AllocationRecord>, AllocatorError> {
    config.validate()?;
    windows(panel, spec)?
        .par_iter()
        .map(|w| {
            let stats = window_stats(panel, w.range(), w.index)?;
            let returns = panel.window_returns(w.range());
            let mut record = allocate_window(&stats, &returns, config)?;
            record.start = w.start;
            record.end = w.end;
            Ok(record)
        })
        .collect()
}
