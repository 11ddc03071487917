//! Python bindings: run presets or configs and evaluate the fibre curves.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use myo_core::config::{load_config_str, load_preset, presets, ResolvedConfig};
use myo_core::constitutive::curves;
use myo_core::scenarios::studies::StudyOutput;
use myo_core::MyoError;

fn to_py(e: MyoError) -> PyErr {
    match e {
        MyoError::Config(_) | MyoError::Parse { .. } | MyoError::Validation(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Names of the bundled presets.
#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    presets::NAMES.to_vec()
}

/// Fully resolved configuration of a preset, as TOML text.
#[pyfunction]
#[pyo3(signature = (name, overrides = Vec::new()))]
fn resolve_preset(name: &str, overrides: Vec<String>) -> PyResult<String> {
    load_preset(name, &overrides)
        .and_then(|c| c.echo())
        .map_err(to_py)
}

fn execute<'py>(py: Python<'py>, cfg: &ResolvedConfig) -> PyResult<Bound<'py, PyDict>> {
    let mut out = StudyOutput::default();
    py.detach(|| cfg.execute_into(&mut out, &mut |_, _| Ok(())))
        .map_err(to_py)?;
    let result = PyDict::new(py);
    result.set_item("metrics", &out.metrics)?;
    let runs = PyDict::new(py);
    for run in &out.runs {
        let entry = PyDict::new(py);
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        columns.insert("t".into(), run.series.t.clone());
        for name in &run.series.names {
            columns.insert(name.clone(), run.series.column(name).unwrap_or_default());
        }
        entry.set_item("probes", columns)?;
        entry.set_item("steps", run.summary.steps)?;
        entry.set_item("newton_iterations", run.summary.newton_iterations)?;
        entry.set_item("final_residual", run.summary.final_residual)?;
        entry.set_item("max_abs_j_minus_1", run.summary.max_abs_j_minus_1)?;
        entry.set_item("completed", run.summary.completed)?;
        runs.set_item(&run.name, entry)?;
    }
    result.set_item("runs", runs)?;
    Ok(result)
}

/// Runs a bundled preset. Returns `{"metrics": {...}, "runs": {name: {...}}}`
/// where each run carries its probe columns under `"probes"`.
#[pyfunction]
#[pyo3(signature = (name, overrides = Vec::new()))]
fn run_preset<'py>(
    py: Python<'py>,
    name: &str,
    overrides: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load_preset(name, &overrides).map_err(to_py)?;
    execute(py, &cfg)
}

/// Runs a configuration given as TOML text; relative paths resolve
/// against `base_dir`.
#[pyfunction]
#[pyo3(signature = (text, overrides = Vec::new(), base_dir = "."))]
fn run_config<'py>(
    py: Python<'py>,
    text: &str,
    overrides: Vec<String>,
    base_dir: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load_config_str(text, &overrides, Path::new(base_dir)).map_err(to_py)?;
    execute(py, &cfg)
}

/// Normalized passive fibre stress at modified stretch `l`.
#[pyfunction]
fn passive_muscle(l: f64) -> f64 {
    curves::passive_muscle(l).0
}

/// Normalized active force-length value with sarcomere shift `c_sarco`.
#[pyfunction]
#[pyo3(signature = (l, c_sarco = 0.0))]
fn active_force_length(l: f64, c_sarco: f64) -> f64 {
    curves::active_force_length(l, c_sarco)
}

/// Force-velocity multiplier at fibre strain rate `epsbar` (1/s).
#[pyfunction]
#[pyo3(signature = (epsbar, epsbar0 = 5.0))]
fn force_velocity(epsbar: f64, epsbar0: f64) -> PyResult<f64> {
    if !(epsbar0 > 0.0) {
        return Err(PyValueError::new_err("epsbar0 must be positive"));
    }
    Ok(curves::force_velocity(epsbar, epsbar0))
}

#[pymodule]
fn myo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(passive_muscle, m)?)?;
    m.add_function(wrap_pyfunction!(active_force_length, m)?)?;
    m.add_function(wrap_pyfunction!(force_velocity, m)?)?;
    Ok(())
}
