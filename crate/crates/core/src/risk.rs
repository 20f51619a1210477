//! Empirical tail-risk measures and the volatility-scaled Expected Shortfall target.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("empty sample")]
    EmptySample,
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("baseline sigma must be > 0, got {0}")]
    BadBaselineSigma(f64),
    #[error("baseline ES must be < 0, got {0}")]
    BadBaselineEs(f64),
    #[error("benchmark volatility is zero in this window; ES target is undefined")]
    DegenerateVolatility,
    #[error("ES target is zero; convergence ratio is undefined")]
    ZeroTarget,
    #[error("baseline window has {0} periods, need at least 2")]
    ShortBaseline(usize),
}

fn check_alpha(alpha: f64) -> Result<(), RiskError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RiskError::BadAlpha(alpha))
    }
}

/// Number of order statistics in the lower tail: `ceil(alpha * W)`, at least one.
pub fn tail_count(len: usize, alpha: f64) -> usize {
    ((alpha * len as f64).ceil() as usize).clamp(1, len)
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean of the `ceil(alpha * W)` smallest values. Returned in return space, so losses are negative.
pub fn expected_shortfall(sample: &[f64], alpha: f64) -> Result<f64, RiskError> {
    check_alpha(alpha)?;
    if sample.is_empty() {
        return Err(RiskError::EmptySample);
    }
    let k = tail_count(sample.len(), alpha);
    let v = sorted(sample);
    Ok(v[..k].iter().sum::<f64>() / k as f64)
}

/// The `ceil(alpha * W)`-th smallest value (empirical lower quantile). Diagnostic only.
pub fn value_at_risk(sample: &[f64], alpha: f64) -> Result<f64, RiskError> {
    check_alpha(alpha)?;
    if sample.is_empty() {
        return Err(RiskError::EmptySample);
    }
    let k = tail_count(sample.len(), alpha);
    Ok(sorted(sample)[k - 1])
}

/// Sample standard deviation with the W-1 denominator.
pub fn volatility(sample: &[f64]) -> Option<f64> {
    if sample.len() < 2 {
        return None;
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let ss: f64 = sample.iter().map(|r| (r - mean) * (r - mean)).sum();
    Some((ss / (n - 1.0)).sqrt())
}

/// Tail level plus the frozen crisis-baseline benchmark volatility and ES.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub alpha: f64,
    pub baseline_sigma: f64,
    pub baseline_es: f64,
}

impl RiskConfig {
    pub fn new(alpha: f64, baseline_sigma: f64, baseline_es: f64) -> Result<Self, RiskError> {
        check_alpha(alpha)?;
        if !(baseline_sigma > 0.0 && baseline_sigma.is_finite()) {
            return Err(RiskError::BadBaselineSigma(baseline_sigma));
        }
        if !(baseline_es < 0.0 && baseline_es.is_finite()) {
            return Err(RiskError::BadBaselineEs(baseline_es));
        }
        Ok(Self {
            alpha,
            baseline_sigma,
            baseline_es,
        })
    }

    /// Measures volatility and ES of the benchmark over a baseline stretch
    /// (typically a crisis period) and freezes them.
    pub fn from_baseline(benchmark_returns: &[f64], alpha: f64) -> Result<Self, RiskError> {
        let sigma =
            volatility(benchmark_returns).ok_or(RiskError::ShortBaseline(benchmark_returns.len()))?;
        let es = expected_shortfall(benchmark_returns, alpha)?;
        Self::new(alpha, sigma, es)
    }
}

/// `baseline_sigma / benchmark_sigma * baseline_es`: less risk budget when the market is volatile.
pub fn es_target(config: &RiskConfig, benchmark_sigma: f64) -> Result<f64, RiskError> {
    if benchmark_sigma <= 0.0 {
        return Err(RiskError::DegenerateVolatility);
    }
    Ok(config.baseline_sigma / benchmark_sigma * config.baseline_es)
}

/// `|1 - es_value / es_target| <= eta`.
pub fn converged(es_value: f64, es_target: f64, eta: f64) -> Result<bool, RiskError> {
    if es_target == 0.0 {
        return Err(RiskError::ZeroTarget);
    }
    Ok((1.0 - es_value / es_target).abs() <= eta)
}
