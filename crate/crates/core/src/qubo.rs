//! Penalty compilation of the constrained mean-variance problem into QUBO form.
//!
//! The compiled objective, for `w = decode(x)`, is
//!
//! ```text
//! E(x) = ½ wᵀ C w + λ_return (μᵀw − ρ)² + λ_budget (Σw − 1)²
//! ```
//!
//! Substituting `w_i = Σ_a 2^-a x_(i,a)` and using `x² = x` gives a quadratic
//! form in `x`. Storage convention: `q` is symmetric, its diagonal holds the
//! linear coefficients, and the energy is
//! `Σ_u q_uu x_u + Σ_{u<v} 2 q_uv x_u x_v + offset`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{BitVector, Encoding};

#[derive(Debug, Error, PartialEq)]
pub enum QuboError {
    #[error("covariance is {rows}x{cols}, expected {n}x{n}")]
    CovShape { rows: usize, cols: usize, n: usize },
    #[error("mean vector has length {found}, expected {n}")]
    MuLength { found: usize, n: usize },
    #[error("penalty {name} must be finite and >= 0, got {value}")]
    BadPenalty { name: &'static str, value: f64 },
    #[error("bit vector has length {found}, problem has {n} variables")]
    LengthMismatch { found: usize, n: usize },
    #[error("non-finite input to QUBO build")]
    NonFinite,
    #[error("coefficient matrix is not symmetric at ({u}, {v})")]
    Asymmetric { u: usize, v: usize },
    #[error("malformed QUBO JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboProblem {
    n: usize,
    q: Vec<f64>,
    offset: f64,
    encoding: Option<Encoding>,
    penalty_budget: f64,
    penalty_return: f64,
    target_return: f64,
}

/// Compiles `½wᵀCw` plus squared return-target and budget penalties.
pub fn build(
    enc: &Encoding,
    cov: &[Vec<f64>],
    mu: &[f64],
    target_return: f64,
    penalty_budget: f64,
    penalty_return: f64,
) -> Result<QuboProblem, QuboError> {
    let n_assets = enc.n_assets();
    if cov.len() != n_assets || cov.iter().any(|row| row.len() != n_assets) {
        return Err(QuboError::CovShape {
            rows: cov.len(),
            cols: cov.first().map_or(0, Vec::len),
            n: n_assets,
        });
    }
    if mu.len() != n_assets {
        return Err(QuboError::MuLength {
            found: mu.len(),
            n: n_assets,
        });
    }
    for (name, value) in [("budget", penalty_budget), ("return", penalty_return)] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(QuboError::BadPenalty { name, value });
        }
    }
    if !target_return.is_finite()
        || mu.iter().any(|m| !m.is_finite())
        || cov.iter().flatten().any(|c| !c.is_finite())
    {
        return Err(QuboError::NonFinite);
    }

    let n = enc.total_bits();
    let mut q = vec![0.0; n * n];
    for u in 0..n {
        let (i, cu) = (enc.asset_of(u), enc.bit_value(u));
        for v in u..n {
            let (k, cv) = (enc.asset_of(v), enc.bit_value(v));
            let pair = 0.5 * cov[i][k] + penalty_return * mu[i] * mu[k] + penalty_budget;
            let coeff = if u == v {
                cu * cu * pair + cu * (-2.0 * penalty_return * target_return * mu[i] - 2.0 * penalty_budget)
            } else {
                cu * cv * pair
            };
            q[u * n + v] = coeff;
            q[v * n + u] = coeff;
        }
    }
    Ok(QuboProblem {
        n,
        q,
        offset: penalty_return * target_return * target_return + penalty_budget,
        encoding: Some(*enc),
        penalty_budget,
        penalty_return,
        target_return,
    })
}

/// `(λ_budget, λ_return)`, both `10 * max(1, max|½C|, |ρ|·max|μ|)`.
pub fn default_penalties(cov: &[Vec<f64>], mu: &[f64], target_return: f64) -> (f64, f64) {
    let half_cov = cov.iter().flatten().fold(0.0f64, |m, c| m.max((0.5 * c).abs()));
    let max_mu = mu.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = 1.0f64.max(half_cov).max(target_return.abs() * max_mu);
    let lambda = 10.0 * scale;
    (lambda, lambda)
}

impl QuboProblem {
    /// Raw problem from a dense row-major symmetric matrix (diagonal = linear terms).
    pub fn from_dense(n: usize, q: Vec<f64>, offset: f64) -> Result<Self, QuboError> {
        if q.len() != n * n {
            return Err(QuboError::CovShape {
                rows: q.len() / n.max(1),
                cols: n,
                n,
            });
        }
        if q.iter().any(|c| !c.is_finite()) || !offset.is_finite() {
            return Err(QuboError::NonFinite);
        }
        for u in 0..n {
            for v in u + 1..n {
                if q[u * n + v] != q[v * n + u] {
                    return Err(QuboError::Asymmetric { u, v });
                }
            }
        }
        Ok(Self {
            n,
            q,
            offset,
            encoding: None,
            penalty_budget: 0.0,
            penalty_return: 0.0,
            target_return: 0.0,
        })
    }

    /// Raw problem from the interchange format; inverse of [`QuboProblem::to_json`]
    /// up to the encoding metadata.
    pub fn from_json(json: &QuboJson) -> Result<Self, QuboError> {
        let n = json.n;
        let mut q = vec![0.0; n * n];
        for &(u, v, c) in &json.entries {
            if u > v || v >= n {
                return Err(QuboError::Json(format!("bad entry index ({u}, {v})")));
            }
            if u == v {
                q[u * n + u] += c;
            } else {
                q[u * n + v] += 0.5 * c;
                q[v * n + u] += 0.5 * c;
            }
        }
        Self::from_dense(n, q, json.offset)
    }

    /// Number of binary variables.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeff(&self, u: usize, v: usize) -> f64 {
        self.q[u * self.n + v]
    }

    /// Row `u` of the symmetric coefficient matrix.
    pub fn row(&self, u: usize) -> &[f64] {
        &self.q[u * self.n..(u + 1) * self.n]
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// The weight encoding, absent for problems loaded from raw coefficients.
    pub fn encoding(&self) -> Option<&Encoding> {
        self.encoding.as_ref()
    }

    pub fn penalty_budget(&self) -> f64 {
        self.penalty_budget
    }

    pub fn penalty_return(&self) -> f64 {
        self.penalty_return
    }

    pub fn target_return(&self) -> f64 {
        self.target_return
    }

    /// `Σ_u q_uu x_u + Σ_{u<v} 2 q_uv x_u x_v + offset`.
    pub fn energy(&self, x: &BitVector) -> Result<f64, QuboError> {
        if x.len() != self.n {
            return Err(QuboError::LengthMismatch {
                found: x.len(),
                n: self.n,
            });
        }
        Ok(self.energy_unchecked(x.as_slice()))
    }

    pub(crate) fn energy_unchecked(&self, x: &[bool]) -> f64 {
        let on: Vec<usize> = (0..self.n).filter(|&u| x[u]).collect();
        let mut e = self.offset;
        for (a, &u) in on.iter().enumerate() {
            let row = self.row(u);
            e += row[u];
            for &v in &on[a + 1..] {
                e += 2.0 * row[v];
            }
        }
        e
    }

    /// Sparse upper-triangle form for external solvers.
    pub fn to_json(&self) -> QuboJson {
        let mut entries = Vec::new();
        for u in 0..self.n {
            for v in u..self.n {
                let c = self.coeff(u, v);
                if c != 0.0 {
                    entries.push((u, v, if u == v { c } else { 2.0 * c }));
                }
            }
        }
        QuboJson {
            n: self.n,
            offset: self.offset,
            entries,
        }
    }
}

/// Interchange format: `{"n": .., "offset": .., "entries": [[u, v, coeff], ..]}`.
///
/// Every entry has `u <= v`. A diagonal entry is the linear coefficient of
/// `x_u`; an off-diagonal entry is the full coefficient of `x_u * x_v`, so
/// `E(x) = offset + Σ coeff * x_u * x_v` over the listed entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboJson {
    pub n: usize,
    pub offset: f64,
    pub entries: Vec<(usize, usize, f64)>,
}

impl QuboJson {
    pub fn parse(text: &str) -> Result<Self, QuboError> {
        let parsed: Self = serde_json::from_str(text).map_err(|e| QuboError::Json(e.to_string()))?;
        if let Some(&(u, v, _)) = parsed.entries.iter().find(|(u, v, _)| u > v || *v >= parsed.n) {
            return Err(QuboError::Json(format!("bad entry index ({u}, {v})")));
        }
        Ok(parsed)
    }

    /// Indented JSON with one `[u, v, coeff]` entry per line.
    pub fn to_string_pretty(&self) -> String {
        let num = |x: f64| serde_json::to_string(&x).expect("finite coefficient");
        let mut s = format!("{{\n  \"n\": {},\n  \"offset\": {},\n  \"entries\": [", self.n, num(self.offset));
        for (k, (u, v, c)) in self.entries.iter().enumerate() {
            s.push_str(if k == 0 { "\n    " } else { ",\n    " });
            s.push_str(&format!("[{u}, {v}, {}]", num(*c)));
        }
        s.push_str(if self.entries.is_empty() { "]\n}" } else { "\n  ]\n}" });
        s
    }

    pub fn energy(&self, x: &BitVector) -> Result<f64, QuboError> {
        if x.len() != self.n {
            return Err(QuboError::LengthMismatch {
                found: x.len(),
                n: self.n,
            });
        }
        Ok(self.offset
            + self
                .entries
                .iter()
                .filter(|(u, v, _)| x.get(*u) && x.get(*v))
                .map(|(_, _, c)| c)
                .sum::<f64>())
    }
}
