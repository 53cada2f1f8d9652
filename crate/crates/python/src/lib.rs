//! Python module `ppdiag_py`. Points are lists of `(x, y)` tuples, windows
//! are `(x_min, x_max, y_min, y_max)` and structured arguments (models,
//! estimators, statistics) are JSON strings in the same schema as the CLI
//! configuration.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ppdiag::diagnostics::{evaluate, DiagOptions, LocalStatistic};
use ppdiag::fit::{fit_mple, FitOptions, FittedModel, FittedModelRecord};
use ppdiag::simulate::McmcConfig;
use ppdiag::summaries::{k_hat, KEstimator, RGrid};
use ppdiag::trend::cox_score_test;
use ppdiag::{Covariate, ModelSpec, PixelGrid, Point, PointPattern, Window};

type Columns = BTreeMap<String, Vec<f64>>;

fn err(e: ppdiag::Error) -> PyErr {
    use ppdiag::Error as E;
    match e {
        E::NonConvergence { .. } | E::Numerical(_) | E::TooManyDropped { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> PyResult<T> {
    serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn window(w: (f64, f64, f64, f64)) -> PyResult<Window> {
    Window::new(w.0, w.1, w.2, w.3).map_err(err)
}

fn pattern(points: Vec<(f64, f64)>, w: (f64, f64, f64, f64)) -> PyResult<PointPattern> {
    PointPattern::new(points.into_iter().map(|(x, y)| Point::new(x, y)).collect(), window(w)?).map_err(err)
}

fn points_of(p: &PointPattern) -> Vec<(f64, f64)> {
    p.points().iter().map(|u| (u.x, u.y)).collect()
}

/// Simulate `model` on `window`.
#[pyfunction]
#[pyo3(signature = (model, window, seed=0, n_steps=100_000))]
fn simulate(model: &str, window: (f64, f64, f64, f64), seed: u64, n_steps: u64) -> PyResult<Vec<(f64, f64)>> {
    let m: ModelSpec = json(model, "model")?;
    m.validate().map_err(err)?;
    m.check_simulable().map_err(err)?;
    let w = self::window(window)?;
    let cfg = McmcConfig { n_steps, ..Default::default() };
    let p = ppdiag::diagnostics::simulate_model(&m, &w, seed, &cfg).map_err(err)?;
    Ok(points_of(&p))
}

/// Fit the model form by maximum pseudo-likelihood; returns the fitted-model JSON.
#[pyfunction]
#[pyo3(signature = (points, window, model, options=None))]
fn fit(points: Vec<(f64, f64)>, window: (f64, f64, f64, f64), model: &str, options: Option<&str>) -> PyResult<String> {
    let p = pattern(points, window)?;
    let spec: ModelSpec = json(model, "model")?;
    let opts: FitOptions = options.map(|o| json(o, "options")).transpose()?.unwrap_or_default();
    let fm = fit_mple(&p, &spec, &opts).map_err(err)?;
    serde_json::to_string(&fm.record()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// K̂ on the distances `r` (which must start at 0).
#[pyfunction]
#[pyo3(signature = (points, window, r, estimator=None))]
fn k_function(
    points: Vec<(f64, f64)>,
    window: (f64, f64, f64, f64),
    r: Vec<f64>,
    estimator: Option<&str>,
) -> PyResult<Vec<f64>> {
    let p = pattern(points, window)?;
    let est: KEstimator = estimator.map(|e| json(e, "estimator")).transpose()?.unwrap_or_default();
    k_hat(&p, &RGrid::new(r).map_err(err)?, &est).map_err(err)
}

/// Residual and pseudo-residual columns for `statistic` under a fitted model
/// (JSON produced by `fit`).
#[pyfunction]
#[pyo3(signature = (points, window, fitted, statistic, r, options=None))]
fn residuals(
    points: Vec<(f64, f64)>,
    window: (f64, f64, f64, f64),
    fitted: &str,
    statistic: &str,
    r: Vec<f64>,
    options: Option<&str>,
) -> PyResult<Columns> {
    let p = pattern(points, window)?;
    let rec: FittedModelRecord = json(fitted, "fitted")?;
    let fm = FittedModel::from_record(rec, &p).map_err(err)?;
    let stat: LocalStatistic = json(statistic, "statistic")?;
    let opts: DiagOptions = options.map(|o| json(o, "options")).transpose()?.unwrap_or_default();
    let grid = RGrid::new(r).map_err(err)?;
    let t = evaluate(&stat, &fm, &p, &grid, fm.mode, &opts).and_then(|c| c.to_table()).map_err(err)?;
    let mut out: Columns = t.columns.into_iter().collect();
    out.insert("r".into(), t.r);
    Ok(out)
}

/// Cox score test for a covariate (JSON); returns `s, expected, variance, t`.
#[pyfunction]
#[pyo3(signature = (points, window, covariate, resolution=256))]
fn score_test(
    points: Vec<(f64, f64)>,
    window: (f64, f64, f64, f64),
    covariate: &str,
    resolution: usize,
) -> PyResult<BTreeMap<String, f64>> {
    let p = pattern(points, window)?;
    let z: Covariate = json(covariate, "covariate")?;
    let grid = PixelGrid::new(*p.window(), resolution, resolution).map_err(err)?;
    let st = cox_score_test(&p, &z, &grid).map_err(err)?;
    Ok(BTreeMap::from([
        ("s".into(), st.s),
        ("expected".into(), st.expected),
        ("variance".into(), st.variance),
        ("t".into(), st.t),
    ]))
}

#[pymodule]
fn ppdiag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(k_function, m)?)?;
    m.add_function(wrap_pyfunction!(residuals, m)?)?;
    m.add_function(wrap_pyfunction!(score_test, m)?)?;
    Ok(())
}
