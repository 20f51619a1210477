//! QUBO minimization backends: exhaustive enumeration and simulated annealing.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::BitVector;
use crate::qubo::QuboProblem;

/// Largest problem the exhaustive backend accepts.
pub const MAX_EXHAUSTIVE_BITS: usize = 24;
/// `auto` switches from exhaustive to annealing above this size.
pub const AUTO_EXHAUSTIVE_BITS: usize = 16;

const SCHEDULE_PROBES: usize = 100;
const COLD_RATIO: f64 = 1e-3;
const RESYNC_INTERVAL: u64 = 1 << 12;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("problem has {0} bits; exhaustive search supports at most {MAX_EXHAUSTIVE_BITS}")]
    TooLarge(usize),
    #[error("unknown backend {0:?} (expected exhaustive, annealing or auto)")]
    UnknownBackend(String),
    #[error("num_reads and sweeps must be >= 1 (got {num_reads}, {sweeps})")]
    BadParameters { num_reads: usize, sweeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exhaustive,
    Annealing,
    #[default]
    Auto,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Exhaustive => "exhaustive",
            Backend::Annealing => "annealing",
            Backend::Auto => "auto",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive" => Ok(Backend::Exhaustive),
            "annealing" => Ok(Backend::Annealing),
            "auto" => Ok(Backend::Auto),
            other => Err(SolverError::UnknownBackend(other.to_string())),
        }
    }
}

/// Backend choice plus annealing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub backend: Backend,
    pub seed: u64,
    pub num_reads: usize,
    pub sweeps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            backend: Backend::Auto,
            seed: 42,
            num_reads: 20,
            sweeps: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveRequest<'a> {
    pub problem: &'a QuboProblem,
    pub seed: u64,
    pub num_reads: usize,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitSolution {
    pub x: BitVector,
    pub energy: f64,
    pub reads_used: usize,
    pub backend_name: String,
}

/// Bit assignment with cached local fields `Σ_{v≠u} q_uv x_v`, giving O(1)
/// flip deltas and O(n) flips.
struct FlipState<'a> {
    problem: &'a QuboProblem,
    x: Vec<bool>,
    local: Vec<f64>,
    energy: f64,
}

impl<'a> FlipState<'a> {
    fn new(problem: &'a QuboProblem, x: Vec<bool>) -> Self {
        let mut s = Self {
            problem,
            local: vec![0.0; x.len()],
            x,
            energy: 0.0,
        };
        s.resync();
        s
    }

    fn resync(&mut self) {
        let n = self.x.len();
        for u in 0..n {
            let row = self.problem.row(u);
            self.local[u] = (0..n).filter(|&v| v != u && self.x[v]).map(|v| row[v]).sum();
        }
        self.energy = self.problem.energy_unchecked(&self.x);
    }

    fn delta(&self, u: usize) -> f64 {
        let d = self.problem.coeff(u, u) + 2.0 * self.local[u];
        if self.x[u] {
            -d
        } else {
            d
        }
    }

    fn flip(&mut self, u: usize) {
        self.energy += self.delta(u);
        self.x[u] = !self.x[u];
        let sign = if self.x[u] { 1.0 } else { -1.0 };
        let row = self.problem.row(u);
        for (v, l) in self.local.iter_mut().enumerate() {
            if v != u {
                *l += sign * row[v];
            }
        }
    }
}

/// Global minimum by enumeration; among (numerically) tied states the
/// lexicographically smallest bitstring wins.
pub fn solve_exhaustive(problem: &QuboProblem) -> Result<BitSolution, SolverError> {
    let n = problem.n();
    if n > MAX_EXHAUSTIVE_BITS {
        return Err(SolverError::TooLarge(n));
    }
    // Visit states in lexicographic order (bit 0 most significant) so the
    // first state reaching the minimum is the tie-break winner.
    let mut state = FlipState::new(problem, vec![false; n]);
    let mut best_index = 0u64;
    let mut best_energy = state.energy;
    for index in 1..(1u64 << n) {
        for k in 0..=index.trailing_zeros() as usize {
            state.flip(n - 1 - k);
        }
        if index % RESYNC_INTERVAL == 0 {
            state.resync();
        }
        if state.energy < best_energy - tie_tolerance(best_energy) {
            best_energy = state.energy;
            best_index = index;
        }
    }
    let x = BitVector::from_index(best_index, n);
    Ok(BitSolution {
        energy: problem.energy_unchecked(x.as_slice()),
        x,
        reads_used: 1,
        backend_name: Backend::Exhaustive.to_string(),
    })
}

fn tie_tolerance(energy: f64) -> f64 {
    1e-12 * (1.0 + energy.abs())
}

/// Largest single-flip |ΔE| seen over random states; sets the hot end of the schedule.
fn hot_temperature(problem: &QuboProblem, seed: u64) -> f64 {
    let n = problem.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hottest = 0.0f64;
    for _ in 0..SCHEDULE_PROBES {
        let x: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let state = FlipState::new(problem, x);
        for u in 0..n {
            hottest = hottest.max(state.delta(u).abs());
        }
    }
    if hottest > 0.0 && hottest.is_finite() {
        hottest
    } else {
        1.0
    }
}

fn anneal_read(problem: &QuboProblem, seed: u64, t_hot: f64, sweeps: usize) -> BitVector {
    let n = problem.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let mut state = FlipState::new(problem, init);
    let decay = if sweeps > 1 {
        COLD_RATIO.powf(1.0 / (sweeps - 1) as f64)
    } else {
        COLD_RATIO
    };
    let mut temperature = t_hot;
    for _ in 0..sweeps {
        for u in 0..n {
            let d = state.delta(u);
            if d <= 0.0 || rng.random::<f64>() < (-d / temperature).exp() {
                state.flip(u);
            }
        }
        temperature *= decay;
    }
    // Zero-temperature descent to a single-flip local minimum.
    state.resync();
    let max_passes = 10 * n + 100;
    for _ in 0..max_passes {
        let mut improved = false;
        for u in 0..n {
            if state.delta(u) < 0.0 {
                state.flip(u);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    BitVector::from_bits(state.x)
}

/// Multi-read simulated annealing. Read `r` is seeded with `seed + r`, so the
/// result does not depend on how reads are scheduled across threads.
pub fn solve_annealing(request: &SolveRequest<'_>) -> Result<BitSolution, SolverError> {
    if request.num_reads == 0 || request.sweeps == 0 {
        return Err(SolverError::BadParameters {
            num_reads: request.num_reads,
            sweeps: request.sweeps,
        });
    }
    let problem = request.problem;
    let t_hot = hot_temperature(problem, request.seed);
    let reads: Vec<(f64, BitVector)> = (0..request.num_reads as u64)
        .into_par_iter()
        .map(|r| {
            let x = anneal_read(problem, request.seed.wrapping_add(r), t_hot, request.sweeps);
            (problem.energy_unchecked(x.as_slice()), x)
        })
        .collect();
    let (energy, x) = reads
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .expect("at least one read");
    Ok(BitSolution {
        x,
        energy,
        reads_used: request.num_reads,
        backend_name: Backend::Annealing.to_string(),
    })
}

/// Dispatches to a backend; `auto` is exhaustive up to [`AUTO_EXHAUSTIVE_BITS`].
pub fn solve(
    problem: &QuboProblem,
    backend: Backend,
    seed: u64,
    num_reads: usize,
    sweeps: usize,
) -> Result<BitSolution, SolverError> {
    let resolved = match backend {
        Backend::Auto if problem.n() <= AUTO_EXHAUSTIVE_BITS => Backend::Exhaustive,
        Backend::Auto => Backend::Annealing,
        other => other,
    };
    match resolved {
        Backend::Exhaustive => solve_exhaustive(problem),
        _ => solve_annealing(&SolveRequest {
            problem,
            seed,
            num_reads,
            sweeps,
        }),
    }
}

pub fn solve_with(problem: &QuboProblem, settings: &SolverSettings) -> Result<BitSolution, SolverError> {
    solve(
        problem,
        settings.backend,
        settings.seed,
        settings.num_reads,
        settings.sweeps,
    )
}
