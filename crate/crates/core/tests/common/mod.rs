#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use esqubo::allocator::AllocatorConfig;
use esqubo::market_data::{ReturnsPanel, WindowStats};
use esqubo::risk::{expected_shortfall, RiskConfig};
use esqubo::solver::Backend;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draws via Box-Muller.
pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

pub fn dates(start: &str, n: usize) -> Vec<NaiveDate> {
    let d0 = NaiveDate::parse_from_str(start, "%Y-%m-%d").unwrap();
    (0..n).map(|k| d0 + Days::new(k as u64)).collect()
}

pub fn panel(values: Vec<Vec<f64>>, benchmark_index: usize) -> ReturnsPanel {
    let t = values[0].len();
    let ids = (0..values.len()).map(|i| format!("A{i}")).collect();
    ReturnsPanel::new(dates("2010-01-01", t), ids, values, benchmark_index).unwrap()
}

/// Naive two-pass mean and (W-1) covariance.
pub fn oracle_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let w = rows[0].len() as f64;
    let mu: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / w).collect();
    let n = rows.len();
    let mut cov = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..rows[0].len() {
                s += (rows[i][k] - mu[i]) * (rows[j][k] - mu[j]);
            }
            cov[i][j] = s / (w - 1.0);
        }
    }
    (mu, cov)
}

/// A cash-like asset (all zeros) plus one volatile asset with positive drift,
/// the volatile asset being the benchmark. The risk config makes the ES
/// target equal `target_weight` times the volatile asset's ES.
pub struct TwoAssetWindow {
    pub stats: WindowStats,
    pub returns: Vec<Vec<f64>>,
    pub risk: RiskConfig,
}

pub fn two_asset_window(seed: u64, periods: usize, alpha: f64, target_weight: f64) -> TwoAssetWindow {
    let mut r = rng(seed);
    let risky: Vec<f64> = normals(&mut r, periods).iter().map(|z| 0.001 + 0.01 * z).collect();
    let returns = vec![vec![0.0; periods], risky];
    let (mu, cov) = oracle_stats(&returns);
    let sigma = cov[1][1].sqrt();
    let es = expected_shortfall(&returns[1], alpha).unwrap();
    let risk = RiskConfig::new(alpha, sigma, target_weight * es).unwrap();
    TwoAssetWindow {
        stats: WindowStats {
            window_index: 0,
            mu,
            cov,
            benchmark_sigma: sigma,
        },
        returns,
        risk,
    }
}

pub fn exhaustive_config(risk: RiskConfig, bits: usize) -> AllocatorConfig {
    let mut cfg = AllocatorConfig::new(risk);
    cfg.bits_per_weight = bits;
    cfg.solver.backend = Backend::Exhaustive;
    cfg
}

/// One step of the scripted outer-loop replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStep {
    pub rho: f64,
    pub es: f64,
}

/// Re-executes the ES-targeting loop from its textual description using the
/// public building blocks (default penalties, QUBO build, exhaustive solve,
/// decode, empirical ES) and the absolute-value ratio test. Step halving on a
/// band crossing is applied before the update that follows the crossing.
pub fn replay_outer_loop(
    stats: &WindowStats,
    returns: &[Vec<f64>],
    risk: &RiskConfig,
    bits: usize,
    eta: f64,
    rho_step: f64,
    max_iters: usize,
) -> (Vec<ReplayStep>, bool) {
    use esqubo::encoding::{decode, Encoding};
    use esqubo::qubo::{build, default_penalties};
    use esqubo::solver::solve_exhaustive;

    let n = stats.mu.len();
    let enc = Encoding::new(n, bits).unwrap();
    let target = risk.baseline_sigma / stats.benchmark_sigma * risk.baseline_es;
    let mut p = stats.mu.iter().sum::<f64>() / n as f64;
    if p <= 0.0 {
        p = 1e-6;
    }
    let mut delta = rho_step;
    let mut last_dir = 0i32;
    let mut steps = Vec::new();
    for _ in 0..max_iters {
        let (lb, lr) = default_penalties(&stats.cov, &stats.mu, p);
        let q = build(&enc, &stats.cov, &stats.mu, p, lb, lr).unwrap();
        let w = decode(&enc, &solve_exhaustive(&q).unwrap().x).unwrap();
        let series: Vec<f64> = (0..returns[0].len())
            .map(|t| (0..n).map(|i| w[i] * returns[i][t]).sum())
            .collect();
        let es = expected_shortfall(&series, risk.alpha).unwrap();
        steps.push(ReplayStep { rho: p, es });
        let ratio = es.abs() / target.abs();
        let dir = if ratio > 1.0 + eta {
            -1
        } else if ratio < 1.0 - eta {
            1
        } else {
            return (steps, true);
        };
        if last_dir != 0 && dir != last_dir {
            delta /= 2.0;
        }
        last_dir = dir;
        p = if dir < 0 { p * (1.0 - delta) } else { p * (1.0 + delta) };
    }
    (steps, false)
}
