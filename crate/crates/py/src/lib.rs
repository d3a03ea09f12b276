use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use wamsplit::coherency::{algorithm1 as select_bipartition, taylor_predict as predict, AnglePrediction};
use wamsplit::coi;
use wamsplit::grid::ieee39;
use wamsplit::harness::{bundled, load_registry, run_live, PipelineConfig};
use wamsplit::sim::EventScript;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Removes the inertia-weighted mean per island; `island` defaults to one island.
#[pyfunction]
#[pyo3(signature = (values, inertias, island=None))]
pub fn coi_transform(values: Vec<f64>, inertias: Vec<f64>, island: Option<Vec<usize>>) -> PyResult<Vec<f64>> {
    let island = island.unwrap_or_else(|| vec![0; values.len()]);
    if inertias.len() != values.len() || island.len() != values.len() {
        return Err(value_err("values, inertias and island must have equal length"));
    }
    if inertias.iter().any(|m| !(*m > 0.0)) {
        return Err(value_err("inertias must be positive"));
    }
    Ok(coi::coi_transform(&values, &inertias, &island))
}

/// Most separated machine pair as `(i, j, |delta_i - delta_j|)`, zero-based.
#[pyfunction]
pub fn critical_pair(delta: Vec<f64>) -> Option<(usize, usize, f64)> {
    let members: Vec<usize> = (0..delta.len()).collect();
    coi::critical_pair(&delta, &members).map(|p| (p.i, p.j, p.delta_max))
}

/// Quadratic extrapolation of angle histories (rows oldest first, one column per machine).
#[pyfunction]
#[pyo3(signature = (history, t_s=1.0/60.0, horizon_s=0.1, fit_window=12))]
pub fn taylor_predict(history: Vec<Vec<f64>>, t_s: f64, horizon_s: f64, fit_window: usize) -> PyResult<Vec<Vec<f64>>> {
    let m = history.first().map_or(0, Vec::len);
    if history.iter().any(|r| r.len() != m) {
        return Err(value_err("history rows must have equal length"));
    }
    if !(t_s > 0.0 && horizon_s > 0.0) {
        return Err(value_err("t_s and horizon_s must be positive"));
    }
    let machines: Vec<usize> = (0..m).collect();
    predict(&history, &machines, t_s, horizon_s, fit_window)
        .map(|p| p.values)
        .map_err(value_err)
}

/// Critical bipartition `(cm, nm)` of predicted angle deviations (deg), or None.
#[pyfunction]
pub fn algorithm1(prediction: Vec<Vec<f64>>) -> PyResult<Option<(Vec<usize>, Vec<usize>)>> {
    let m = prediction.first().map_or(0, Vec::len);
    if prediction.iter().any(|r| r.len() != m) {
        return Err(value_err("prediction rows must have equal length"));
    }
    let pred = AnglePrediction {
        values: prediction,
        machines: (0..m).collect(),
        horizon_s: 0.0,
    };
    Ok(select_bipartition(&pred, None).map(|b| (b.cm, b.nm)))
}

/// Runs a bundled or file scenario on the 39-bus case and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (scenario, config=None))]
pub fn run_scenario(py: Python<'_>, scenario: &str, config: Option<&str>) -> PyResult<String> {
    let script = if Path::new(scenario).exists() {
        EventScript::load(scenario).map_err(value_err)?
    } else {
        bundled::scenario(scenario).ok_or_else(|| value_err(format!("unknown scenario {scenario}")))?
    };
    let cfg = match config {
        Some(p) => PipelineConfig::load(p).map_err(value_err)?,
        None => bundled::config(),
    };
    let report = py.allow_threads(|| {
        let case = ieee39();
        let registry = load_registry(&cfg, &case)?;
        run_live(&case, &script, &cfg, &registry).map(|out| out.report)
    });
    let report = report.map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn wamsplit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(coi_transform, m)?)?;
    m.add_function(wrap_pyfunction!(critical_pair, m)?)?;
    m.add_function(wrap_pyfunction!(taylor_predict, m)?)?;
    m.add_function(wrap_pyfunction!(algorithm1, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
