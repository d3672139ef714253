//! Ground state of the focusing problem `inf { H(f) : M(f) <= D }`.
//!
//! The minimizer saturates the constraint and solves
//! `Q'' + Q^3 = Lambda Q`. On the line the solution is
//! `sqrt(2 Lambda) sech(sqrt(Lambda) x)` with `Lambda = D^2 / 16`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{
    fft_forward, fft_inverse, gradient_energy, hamiltonian, quartic_integral, spectral_derivative, ComplexField,
    TorusGrid,
};

/// `Lambda(D) = D^2/16` on the line.
pub fn multiplier_for_mass(mass_d: f64) -> f64 {
    mass_d * mass_d / 16.0
}

/// Line value `I(D) = -D^3/96`.
pub fn line_energy(mass_d: f64) -> f64 {
    -mass_d.powi(3) / 96.0
}

pub fn sech_profile(lambda: f64, x: f64) -> f64 {
    (2.0 * lambda).sqrt() / (lambda.sqrt() * x).cosh()
}

/// `e^{i theta} sqrt(2 Lambda) sech(sqrt(Lambda)(x - x0))`, centred at the
/// periodic image of `x0` closest to each grid point.
pub fn closed_form_soliton(lambda: f64, grid: &TorusGrid, x0: f64, theta: f64) -> Result<ComplexField> {
    if !(lambda > 0.0) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let tail = (-lambda.sqrt() * grid.half_length()).exp();
    if tail > 1e-8 {
        log::warn!("soliton tail e^(-sqrt(lambda) l) = {tail:.2e} is not negligible on this torus");
    }
    let phase = Complex64::from_polar(1.0, theta);
    Ok(ComplexField::from_fn(*grid, |x| {
        let d = grid.wrap(x - x0);
        phase * sech_profile(lambda, d)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stopping threshold on `max|Q'' + Q^3 - Lambda Q| / max Q`.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Pseudo-time step of the semi-implicit flow, in units of `1/Lambda`.
    pub time_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iters: 100_000,
            time_step: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolitonProfile {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
    pub mass_d: f64,
    pub multiplier_lambda: f64,
    pub energy_i: f64,
    pub kinetic_k: f64,
    pub quartic_u: f64,
    pub el_residual: f64,
    pub iterations: usize,
}

impl SolitonProfile {
    /// Profile built from given samples (no solve). Energies and the
    /// multiplier are recomputed from the samples.
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        let f = ComplexField::from_real(grid, &values)?;
        let mass = crate::lattice::mass_functional(&f);
        let lambda = multiplier_of(&f);
        let e = hamiltonian(&f);
        let res = el_residual(&f, lambda);
        Ok(Self {
            grid,
            values,
            mass_d: mass,
            multiplier_lambda: lambda,
            energy_i: e.total,
            kinetic_k: e.kinetic,
            quartic_u: e.quartic,
            el_residual: res,
            iterations: 0,
        })
    }

    pub fn field(&self) -> ComplexField {
        ComplexField::from_real(self.grid, &self.values).expect("profile values are finite")
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Characteristic width `1/sqrt(Lambda)`.
    pub fn width(&self) -> f64 {
        1.0 / self.multiplier_lambda.sqrt()
    }
}

fn multiplier_of(f: &ComplexField) -> f64 {
    let m = crate::lattice::mass_functional(f);
    (quartic_integral(f) - gradient_energy(f)) / m
}

/// `max |f'' + |f|^2 f - Lambda f| / max |f|`.
pub fn el_residual(f: &ComplexField, lambda: f64) -> f64 {
    let d2 = spectral_derivative(f, 2);
    let peak = f.max_abs();
    d2.values()
        .iter()
        .zip(f.values())
        .map(|(a, q)| (a + q * q.norm_sqr() - q * lambda).norm())
        .fold(0.0, f64::max)
        / peak
}

/// Normalized gradient flow with renormalization to `M = D` after each step.
///
/// The step is semi-implicit: `(1/tau + s - d^2) Q* = Q/tau + Q^3 - Lambda(Q) Q + s Q`
/// with `s` the current multiplier, followed by rescaling to mass `D` and
/// even symmetrization about `x = 0`. A fixed point solves the
/// Euler-Lagrange equation exactly, for any `tau`.
pub fn solve_ground_state(mass_d: f64, grid: &TorusGrid, cfg: &SolverConfig) -> Result<SolitonProfile> {
    if !(mass_d > 0.0) || !mass_d.is_finite() {
        return invalid(format!("mass D must be positive, got {mass_d}"));
    }
    let lambda0 = multiplier_for_mass(mass_d);
    let width = 1.0 / lambda0.sqrt();
    if grid.spacing() > width / 16.0 {
        return invalid(format!(
            "grid under-resolved: spacing {} exceeds 1/16 of the soliton width {}",
            grid.spacing(),
            width
        ));
    }
    if grid.half_length() < 2.0 * width {
        return invalid("torus too short to hold the soliton");
    }
    let n = grid.n();
    let h = grid.spacing();
    let ks: Vec<f64> = grid.wavenumbers();

    let mut q: Vec<f64> = grid.points().iter().map(|x| (-(x * x) / (2.0 * width * width)).exp()).collect();
    renormalize(&mut q, mass_d, h);

    let tau = cfg.time_step / lambda0;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut lambda = lambda0;
    let mut residual = f64::INFINITY;
    for it in 0..cfg.max_iters {
        let f = ComplexField::from_real(*grid, &q)?;
        lambda = multiplier_of(&f);
        if it % 10 == 0 || it + 1 == cfg.max_iters {
            residual = el_residual(&f, lambda);
            if residual <= cfg.tolerance {
                return finish(grid, q, mass_d, lambda, it);
            }
        }
        let s = lambda.max(0.1 * lambda0);
        for (j, b) in buf.iter_mut().enumerate() {
            let v = q[j];
            *b = Complex64::new(v / tau + v * v * v - lambda * v + s * v, 0.0);
        }
        fft_forward(&mut buf);
        for (i, b) in buf.iter_mut().enumerate() {
            *b /= 1.0 / tau + s + ks[i] * ks[i];
        }
        fft_inverse(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            q[j] = b.re;
        }
        symmetrize(&mut q);
        renormalize(&mut q, mass_d, h);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConvergenceFailure {
                iterations: it,
                residual,
            });
        }
    }
    let _ = lambda;
    Err(Error::ConvergenceFailure {
        iterations: cfg.max_iters,
        residual,
    })
}

fn finish(grid: &TorusGrid, mut q: Vec<f64>, mass_d: f64, lambda: f64, iterations: usize) -> Result<SolitonProfile> {
    if q[grid.n() / 2] < 0.0 {
        q.iter_mut().for_each(|v| *v = -*v);
    }
    let f = ComplexField::from_real(*grid, &q)?;
    let e = hamiltonian(&f);
    let res = el_residual(&f, lambda);
    Ok(SolitonProfile {
        grid: *grid,
        values: q,
        mass_d,
        multiplier_lambda: lambda,
        energy_i: e.total,
        kinetic_k: e.kinetic,
        quartic_u: e.quartic,
        el_residual: res,
        iterations,
    })
}

fn renormalize(q: &mut [f64], mass_d: f64, h: f64) {
    let m: f64 = q.iter().map(|v| v * v).sum::<f64>() * h;
    let c = (mass_d / m).sqrt();
    q.iter_mut().for_each(|v| *v *= c);
}

fn symmetrize(q: &mut [f64]) {
    let n = q.len();
    let c = n / 2;
    let r: Vec<f64> = (0..n).map(|j| q[(2 * c + n - j) % n]).collect();
    for j in 0..n {
        q[j] = 0.5 * (q[j] + r[j]);
    }
}

/// Solve on a torus wide enough (`32` widths) that the profile tail is below
/// round-off, at `16` points per width. Profiles from here can be moved to
/// any other grid with [`transfer_profile`].
pub fn solve_reference(mass_d: f64, cfg: &SolverConfig) -> Result<SolitonProfile> {
    if !(mass_d > 0.0) || !mass_d.is_finite() {
        return invalid(format!("mass D must be positive, got {mass_d}"));
    }
    let width = 1.0 / multiplier_for_mass(mass_d).sqrt();
    let grid = TorusGrid::new(1024, 32.0 * width)?;
    solve_ground_state(mass_d, &grid, cfg)
}

/// `Lambda = (int Q^4 - int Q'^2) / int Q^2`.
pub fn lagrange_multiplier(profile: &SolitonProfile) -> Result<f64> {
    let lambda = multiplier_of(&profile.field());
    if !(lambda > 0.0) {
        return Err(Error::DegenerateProfile(format!("non-positive multiplier {lambda:.3e}")));
    }
    Ok(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub quartic: f64,
    pub hamiltonian: f64,
    pub i_of_d: f64,
    /// `H(Q_D) / (D^3 H(Q_1))` using the line value of `H(Q_1)`; 1 for an
    /// exact rescaling.
    pub scaling_ratio: f64,
}

pub fn energy_report(profile: &SolitonProfile) -> EnergyReport {
    let e = hamiltonian(&profile.field());
    EnergyReport {
        kinetic: e.kinetic,
        quartic: e.quartic,
        hamiltonian: e.total,
        i_of_d: e.total,
        scaling_ratio: e.total / (profile.mass_d.powi(3) * line_energy(1.0)),
    }
}

/// Samples of the profile moved to another grid by trigonometric
/// interpolation; zero outside the source torus.
pub fn transfer_profile(profile: &SolitonProfile, target: &TorusGrid) -> Vec<f64> {
    crate::lattice::resample(&profile.field(), *target).re()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, mass_functional};

    #[test]
    fn closed_form_peak_and_mass() {
        let g = make_grid(2048, 160.0).unwrap();
        let q = closed_form_soliton(1.0 / 16.0, &g, 0.0, 0.0).unwrap();
        assert!((q.max_abs() - 2f64.sqrt() / 4.0).abs() < 1e-14);
        assert!((mass_functional(&q) - 1.0).abs() < 1e-6);
        let r = el_residual(&q, 1.0 / 16.0);
        assert!(r < 1e-8, "{r}");
    }

    #[test]
    fn solver_matches_line_values_at_unit_mass() {
        let g = make_grid(1024, 40.0).unwrap();
        let p = solve_ground_state(1.0, &g, &SolverConfig::default()).unwrap();
        assert!((p.multiplier_lambda / 0.0625 - 1.0).abs() < 1e-3, "{}", p.multiplier_lambda);
        assert!((p.energy_i / line_energy(1.0) - 1.0).abs() < 1e-3);
        assert!(p.el_residual <= 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        let g = make_grid(64, 40.0).unwrap();
        assert!(solve_ground_state(1.0, &g, &SolverConfig::default()).is_err());
        assert!(solve_ground_state(-1.0, &g, &SolverConfig::default()).is_err());
        assert!(closed_form_soliton(0.0, &g, 0.0, 0.0).is_err());
    }
}
