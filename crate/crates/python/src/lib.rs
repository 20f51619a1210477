//! Python bindings for the `esqubo` allocation engine.

use std::fs::File;

use esqubo::cli::{run_backtest, write_outputs};
use esqubo::config::RunConfig;
use esqubo::{encoding, market_data, qubo, risk, solver, Backend, BitVector, Encoding};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn bits_from(text: &str) -> PyResult<BitVector> {
    text.parse::<BitVector>().map_err(err)
}

/// Dated panel of per-period asset returns with a designated benchmark column.
#[pyclass(name = "ReturnsPanel", frozen)]
struct PyReturnsPanel {
    inner: market_data::ReturnsPanel,
}

#[pymethods]
impl PyReturnsPanel {
    #[staticmethod]
    fn from_csv(path: &str, benchmark: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| err(format!("{path}: {e}")))?;
        let inner = market_data::load_returns(file, benchmark).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_text(text: &str, benchmark: &str) -> PyResult<Self> {
        let inner = market_data::load_returns(text.as_bytes(), benchmark).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_assets(&self) -> usize {
        self.inner.n_assets()
    }

    #[getter]
    fn n_periods(&self) -> usize {
        self.inner.n_periods()
    }

    #[getter]
    fn asset_ids(&self) -> Vec<String> {
        self.inner.asset_ids().to_vec()
    }

    #[getter]
    fn benchmark(&self) -> String {
        self.inner.benchmark_id().to_string()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.dates().iter().map(|d| d.to_string()).collect()
    }

    /// Returns as `values[asset][period]`.
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values().to_vec()
    }

    /// `(start, end)` period ranges of the rolling windows.
    #[pyo3(signature = (length = 252, stride = 21))]
    fn windows(&self, length: usize, stride: usize) -> PyResult<Vec<(usize, usize)>> {
        let spec = market_data::WindowSpec { length, stride };
        let ws = market_data::windows(&self.inner, spec).map_err(err)?;
        Ok(ws.iter().map(|w| (w.start, w.end)).collect())
    }

    /// `(mu, cov, benchmark_sigma)` over periods `start..end`.
    fn window_stats(&self, start: usize, end: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, f64)> {
        let s = market_data::window_stats(&self.inner, start..end, 0).map_err(err)?;
        Ok((s.mu, s.cov, s.benchmark_sigma))
    }

    fn __repr__(&self) -> String {
        format!(
            "ReturnsPanel(assets={}, periods={}, benchmark={:?})",
            self.inner.n_assets(),
            self.inner.n_periods(),
            self.inner.benchmark_id()
        )
    }
}

#[pyfunction]
fn expected_shortfall(sample: Vec<f64>, alpha: f64) -> PyResult<f64> {
    risk::expected_shortfall(&sample, alpha).map_err(err)
}

#[pyfunction]
fn value_at_risk(sample: Vec<f64>, alpha: f64) -> PyResult<f64> {
    risk::value_at_risk(&sample, alpha).map_err(err)
}

#[pyfunction]
fn es_target(alpha: f64, baseline_sigma: f64, baseline_es: f64, benchmark_sigma: f64) -> PyResult<f64> {
    let cfg = risk::RiskConfig::new(alpha, baseline_sigma, baseline_es).map_err(err)?;
    risk::es_target(&cfg, benchmark_sigma).map_err(err)
}

/// Fixed-point weights encoded by a bit string such as `"0110"`.
#[pyfunction]
fn decode(n_assets: usize, bits_per_weight: usize, bits: &str) -> PyResult<Vec<f64>> {
    let enc = Encoding::new(n_assets, bits_per_weight).map_err(err)?;
    encoding::decode(&enc, &bits_from(bits)?).map_err(err)
}

/// Bit string of the nearest representable weights.
#[pyfunction]
fn encode(bits_per_weight: usize, weights: Vec<f64>) -> PyResult<String> {
    let enc = Encoding::new(weights.len(), bits_per_weight).map_err(err)?;
    Ok(encoding::encode_nearest(&enc, &weights).map_err(err)?.to_string())
}

/// Compiled quadratic binary objective.
#[pyclass(name = "Qubo", frozen)]
struct PyQubo {
    inner: qubo::QuboProblem,
}

#[pymethods]
impl PyQubo {
    /// Builds the allocation objective; penalties default to the automatic scale.
    #[staticmethod]
    #[pyo3(signature = (cov, mu, target_return, bits_per_weight = 4, penalty_budget = None, penalty_return = None))]
    fn build(
        cov: Vec<Vec<f64>>,
        mu: Vec<f64>,
        target_return: f64,
        bits_per_weight: usize,
        penalty_budget: Option<f64>,
        penalty_return: Option<f64>,
    ) -> PyResult<Self> {
        let enc = Encoding::new(mu.len(), bits_per_weight).map_err(err)?;
        let (lb, lr) = qubo::default_penalties(&cov, &mu, target_return);
        let inner = qubo::build(
            &enc,
            &cov,
            &mu,
            target_return,
            penalty_budget.unwrap_or(lb),
            penalty_return.unwrap_or(lr),
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let json = qubo::QuboJson::parse(text).map_err(err)?;
        let inner = qubo::QuboProblem::from_json(&json).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn offset(&self) -> f64 {
        self.inner.offset()
    }

    fn energy(&self, bits: &str) -> PyResult<f64> {
        self.inner.energy(&bits_from(bits)?).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json().to_string_pretty()
    }

    /// Minimizes the objective, returning `(bits, energy, backend)`.
    #[pyo3(signature = (backend = "auto", seed = 42, reads = 20, sweeps = 200))]
    fn solve(&self, py: Python<'_>, backend: &str, seed: u64, reads: usize, sweeps: usize) -> PyResult<(String, f64, String)> {
        let backend: Backend = backend.parse().map_err(err)?;
        let sol = py
            .detach(|| solver::solve(&self.inner, backend, seed, reads, sweeps))
            .map_err(err)?;
        Ok((sol.x.to_string(), sol.energy, sol.backend_name))
    }

    fn __repr__(&self) -> String {
        format!("Qubo(n={}, offset={})", self.inner.n(), self.inner.offset())
    }
}

/// Result of one backtest run.
#[pyclass(name = "Backtest", frozen)]
struct PyBacktest {
    #[pyo3(get)]
    json: String,
    #[pyo3(get)]
    csv: String,
    #[pyo3(get)]
    all_converged: bool,
    #[pyo3(get)]
    weights: Vec<Vec<f64>>,
    #[pyo3(get)]
    iterations: Vec<usize>,
}

/// Runs a backtest from `key = value` configuration text, optionally writing
/// the result files into `out_dir`.
#[pyfunction]
#[pyo3(signature = (config_text, out_dir = None))]
fn backtest(py: Python<'_>, config_text: &str, out_dir: Option<&str>) -> PyResult<PyBacktest> {
    let config = RunConfig::parse(config_text).map_err(err)?;
    let output = py.detach(|| run_backtest(&config)).map_err(err)?;
    if let Some(dir) = out_dir {
        write_outputs(std::path::Path::new(dir), &output).map_err(err)?;
    }
    Ok(PyBacktest {
        all_converged: output.all_converged(),
        weights: output.records.iter().map(|r| r.weights.clone()).collect(),
        iterations: output.records.iter().map(|r| r.iterations()).collect(),
        json: output.json,
        csv: output.csv,
    })
}

#[pymodule]
fn esqubo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyReturnsPanel>()?;
    m.add_class::<PyQubo>()?;
    m.add_class::<PyBacktest>()?;
    m.add_function(wrap_pyfunction!(expected_shortfall, m)?)?;
    m.add_function(wrap_pyfunction!(value_at_risk, m)?)?;
    m.add_function(wrap_pyfunction!(es_target, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    Ok(())
}
