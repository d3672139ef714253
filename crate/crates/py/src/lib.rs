//! Python bindings: ground states, free-field draws and config-driven runs.

use std::path::PathBuf;

use phi4lab::cli::{exit_code, run_experiment as run, ExperimentConfig};
use phi4lab::groundstate::{multiplier_for_mass, solve_ground_state, SolverConfig};
use phi4lab::lattice::TorusGrid;
use phi4lab::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Closed-form multiplier `D^2 / 16` of the line ground state.
#[pyfunction]
fn multiplier(d: f64) -> f64 {
    multiplier_for_mass(d)
}

/// Solve for the ground state of mass `d`; returns a dict with the
/// multiplier, energies, residual and the profile samples.
#[pyfunction]
#[pyo3(signature = (d, n=2048, half_length=20.0, tolerance=1e-8, max_iters=100_000))]
fn ground_state<'py>(
    py: Python<'py>,
    d: f64,
    n: usize,
    half_length: f64,
    tolerance: f64,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = TorusGrid::new(n, half_length).map_err(to_py)?;
    let cfg = SolverConfig {
        tolerance,
        max_iters,
        ..SolverConfig::default()
    };
    let p = py.detach(|| solve_ground_state(d, &grid, &cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("lambda", p.multiplier_lambda)?;
    out.set_item("energy", p.energy_i)?;
    out.set_item("kinetic", p.kinetic_k)?;
    out.set_item("quartic", p.quartic_u)?;
    out.set_item("el_residual", p.el_residual)?;
    out.set_item("x", grid.points())?;
    out.set_item("q", p.values)?;
    Ok(out)
}

/// One free-field draw with spectral covariance `(k^2 + mass)^{-1}`;
/// returns `(re, im)`.
#[pyfunction]
#[pyo3(signature = (n, half_length, mass=1.0, seed=0))]
fn free_field(py: Python<'_>, n: usize, half_length: f64, mass: f64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let grid = TorusGrid::new(n, half_length).map_err(to_py)?;
    let f = py
        .detach(|| phi4lab::sampler::sample_free_field(grid, mass, seed))
        .map_err(to_py)?;
    Ok((f.re(), f.im()))
}

/// Run an experiment from TOML text; returns the JSON report as a string.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None))]
fn run_experiment(py: Python<'_>, config: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg = ExperimentConfig::parse(config).map_err(to_py)?;
    let out = py.detach(|| run(&cfg, out_dir.as_deref())).map_err(to_py)?;
    Ok(out.report.to_string())
}

#[pymodule]
pub fn phi4lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(ground_state, m)?)?;
    m.add_function(wrap_pyfunction!(free_field, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
