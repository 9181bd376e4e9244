//! Python bindings: presets, cost counting, window strategies, the
//! receptive-field metric and deterministic forward runs.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use uvit_core::analysis::relative_receptive_field;
use uvit_core::arch::{init_weights, preset_by_name, synthetic_image, PRESET_NAMES};
use uvit_core::model::forward as run_forward;
use uvit_core::window::format_strategy;
use uvit_core::{count_flops, parse_strategy, ArchConfig, Tensor};

create_exception!(uvit, UvitError, PyValueError);

fn py_err(e: uvit_core::Error) -> PyErr {
    UvitError::new_err(e.to_string())
}

/// Accepts a preset name or a JSON config document.
fn resolve(config: &str) -> uvit_core::Result<ArchConfig> {
    if config.trim_start().starts_with('{') {
        ArchConfig::from_json(config)
    } else {
        preset_by_name(config)
    }
}

/// Parsed window strategy.
#[pyclass(name = "WindowStrategy", frozen)]
struct PyWindowStrategy {
    inner: uvit_core::WindowStrategy,
}

#[pymethods]
impl PyWindowStrategy {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_strategy(text).map_err(py_err)?,
        })
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    /// `(denominator, count)` per phase.
    #[getter]
    fn phases(&self) -> Vec<(u32, usize)> {
        self.inner
            .phases()
            .iter()
            .map(|p| (p.scale.denominator(), p.count))
            .collect()
    }

    /// Window scale of every block.
    fn block_scales(&self) -> Vec<f64> {
        self.inner.block_scales().map(|s| s.as_f64()).collect()
    }

    fn __str__(&self) -> String {
        format_strategy(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("WindowStrategy('{}')", format_strategy(&self.inner))
    }
}

/// Parameter and MAC counts.
#[pyclass(name = "CostReport", frozen, get_all)]
struct PyCostReport {
    params: u64,
    macs: u64,
    /// Per-component MACs.
    breakdown: BTreeMap<String, u64>,
    /// Per-component parameters.
    param_breakdown: BTreeMap<String, u64>,
}

#[pymethods]
impl PyCostReport {
    #[getter]
    fn gmacs(&self) -> f64 {
        self.macs as f64 / 1e9
    }

    fn __repr__(&self) -> String {
        format!("CostReport(params={}, macs={})", self.params, self.macs)
    }
}

fn breakdown_map(b: &uvit_core::cost::Breakdown) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("embedding".to_string(), b.embedding),
        ("block_linear".to_string(), b.block_linear),
        ("block_attention".to_string(), b.block_attention),
        ("transitions".to_string(), b.transitions),
        ("head".to_string(), b.head),
    ])
}

/// Built-in preset names.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    PRESET_NAMES.to_vec()
}

/// JSON config of a preset.
#[pyfunction]
fn preset_json(name: &str) -> PyResult<String> {
    preset_by_name(name)
        .and_then(|c| c.to_json())
        .map_err(py_err)
}

/// Costs of a preset name or JSON config at `input` (default: the config's own).
#[pyfunction]
#[pyo3(signature = (config, input=None))]
fn cost(config: &str, input: Option<usize>) -> PyResult<PyCostReport> {
    let cfg = resolve(config).map_err(py_err)?;
    let r = count_flops(&cfg, input.unwrap_or(cfg.input)).map_err(py_err)?;
    Ok(PyCostReport {
        params: r.params,
        macs: r.macs,
        breakdown: breakdown_map(&r.breakdown.macs),
        param_breakdown: breakdown_map(&r.breakdown.params),
    })
}

/// Canonical spelling of a strategy.
#[pyfunction]
fn canonicalize(text: &str) -> PyResult<String> {
    parse_strategy(text)
        .map(|ws| format_strategy(&ws))
        .map_err(py_err)
}

fn to_matrix(rows: &[Vec<f64>]) -> uvit_core::Result<Tensor> {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Tensor::matrix(&refs)
}

/// Relative receptive field of a row-stochastic score matrix.
#[pyfunction]
fn rrf(scores: Vec<Vec<f64>>) -> PyResult<f64> {
    to_matrix(&scores)
        .and_then(|t| relative_receptive_field(&t))
        .map_err(py_err)
}

/// `{output name: (shape, sum, sha256)}`.
type ForwardSummary = BTreeMap<String, (Vec<usize>, f64, String)>;

/// Seeded forward pass summarized per output tensor.
#[pyfunction]
#[pyo3(signature = (config, input, seed=0))]
fn forward(py: Python<'_>, config: &str, input: usize, seed: u64) -> PyResult<ForwardSummary> {
    let cfg = resolve(config).map_err(py_err)?.with_input(input);
    // Release the interpreter while the encoder runs.
    py.detach(|| {
        let ws = init_weights(&cfg, seed)?;
        let out = run_forward(&cfg, &ws, &synthetic_image(input, seed))?;
        Ok(out
            .tensors()
            .into_iter()
            .map(|(name, t)| (name, (t.dims().to_vec(), t.sum(), t.sha256())))
            .collect())
    })
    .map_err(py_err)
}

#[pymodule]
fn uvit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("UvitError", m.py().get_type::<UvitError>())?;
    m.add_class::<PyWindowStrategy>()?;
    m.add_class::<PyCostReport>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset_json, m)?)?;
    m.add_function(wrap_pyfunction!(cost, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(rrf, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    Ok(())
}
