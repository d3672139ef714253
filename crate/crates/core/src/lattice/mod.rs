//! Periodic grids, Fourier spectral calculus and the basic functionals.
//!
//! A grid with `n` points covers the torus `[-l, l)` with spacing `2l/n`.
//! Point `j` sits at `x_j = -l + j*h`, so `x = 0` is index `n/2` for even `n`.
//! Integrals use the rectangle rule, which is exact for band-limited
//! integrands on the torus.

mod besov;

pub use besov::{littlewood_paley_blocks, weighted_lebesgue_norm, weighted_norm, NormSpec};
pub(crate) use besov::smooth_step;

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT, `X_k = sum_j x_j e^{-2 pi i jk/n}`.
pub fn fft_forward(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse DFT including the `1/n` factor.
pub fn fft_inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    plan.process(buf);
    let s = 1.0 / n as f64;
    for z in buf.iter_mut() {
        *z *= s;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    n_points: usize,
    half_length: f64,
    spacing: f64,
}

/// Checked constructor for production grids: even `n >= 8`.
pub fn make_grid(n_points: usize, half_length: f64) -> Result<TorusGrid> {
    TorusGrid::new(n_points, half_length)
}

impl TorusGrid {
    pub fn new(n_points: usize, half_length: f64) -> Result<Self> {
        if n_points < 8 || n_points % 2 != 0 {
            return invalid(format!("n_points must be even and at least 8, got {n_points}"));
        }
        Self::lattice(n_points, half_length)
    }

    /// Grid without the parity and size restriction. Used for the tiny
    /// lattices of the importance-sampling oracle.
    pub fn lattice(n_points: usize, half_length: f64) -> Result<Self> {
        if n_points == 0 {
            return invalid("n_points must be positive");
        }
        if !(half_length > 0.0) || !half_length.is_finite() {
            return invalid(format!("half_length must be positive, got {half_length}"));
        }
        Ok(Self {
            n_points,
            half_length,
            spacing: 2.0 * half_length / n_points as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n_points
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_length
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Integer mode number of FFT slot `i`, in `{-n/2, ..., n/2 - 1}` for even `n`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n_points;
        if i < (n + 1) / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        PI * self.mode(i) as f64 / self.half_length
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.wavenumber(i)).collect()
    }

    /// True when slot `i` is the unpaired Nyquist mode of an even grid.
    pub fn is_nyquist(&self, i: usize) -> bool {
        self.n_points % 2 == 0 && i == self.n_points / 2
    }

    /// Distance between two points on the circle.
    pub fn periodic_distance(&self, a: f64, b: f64) -> f64 {
        let p = self.period();
        let d = (a - b).rem_euclid(p);
        d.min(p - d)
    }

    /// Wrap a coordinate into `[-l, l)`.
    pub fn wrap(&self, x: f64) -> f64 {
        (x + self.half_length).rem_euclid(self.period()) - self.half_length
    }

    fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self.n_points != other.n_points || (self.half_length - other.half_length).abs() > 1e-12 * self.half_length {
            return invalid("fields live on different grids");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return invalid(format!("expected {} values, got {}", grid.n(), values.len()));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("field contains non-finite entries");
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.n()).map(|j| f(grid.x(j))).collect();
        Self { grid, values }
    }

    pub fn from_real(grid: TorusGrid, re: &[f64]) -> Result<Self> {
        Self::new(grid, re.iter().map(|&r| Complex64::new(r, 0.0)).collect())
    }

    pub fn from_parts(grid: TorusGrid, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return invalid("real and imaginary parts differ in length");
        }
        Self::new(grid, re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|z| z * c)
    }

    pub fn rotate(&self, theta: f64) -> Self {
        let e = Complex64::from_polar(1.0, theta);
        self.map(|z| z * e)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: Complex64, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(self.zip_with(other, |a, b| a + c * b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Unnormalized DFT of the samples.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.values.clone();
        fft_forward(&mut buf);
        buf
    }

    pub fn from_spectrum(grid: TorusGrid, mut spec: Vec<Complex64>) -> Self {
        fft_inverse(&mut spec);
        Self { grid, values: spec }
    }

    /// Exact cyclic shift by `m` grid cells: `f(x - m h)`.
    pub fn roll(&self, m: i64) -> Self {
        let n = self.grid.n() as i64;
        let mut values = vec![Complex64::new(0.0, 0.0); n as usize];
        for (j, v) in self.values.iter().enumerate() {
            values[((j as i64 + m).rem_euclid(n)) as usize] = *v;
        }
        Self { grid: self.grid, values }
    }

    /// Band-limited translation `f(x - a)` for arbitrary real `a`.
    pub fn translate(&self, a: f64) -> Self {
        let mut spec = self.spectrum();
        for (i, s) in spec.iter_mut().enumerate() {
            *s *= Complex64::from_polar(1.0, -self.grid.wavenumber(i) * a);
        }
        Self::from_spectrum(self.grid, spec)
    }

    /// Reflection `f(-x)` about the origin (index `n/2` for even grids).
    pub fn reflect(&self) -> Self {
        let n = self.grid.n();
        let c = n / 2;
        let values = (0..n).map(|j| self.values[(2 * c + n - j) % n]).collect();
        Self { grid: self.grid, values }
    }
}

/// Spectral derivative of the given order. Odd orders zero the Nyquist mode.
pub fn spectral_derivative(f: &ComplexField, order: u32) -> ComplexField {
    if order == 0 {
        return f.clone();
    }
    let g = f.grid;
    let mut spec = f.spectrum();
    let i_pow = Complex64::new(0.0, 1.0).powu(order);
    for (i, s) in spec.iter_mut().enumerate() {
        if order % 2 == 1 && g.is_nyquist(i) {
            *s = Complex64::new(0.0, 0.0);
        } else {
            *s *= i_pow * g.wavenumber(i).powi(order as i32);
        }
    }
    ComplexField::from_spectrum(g, spec)
}

/// Apply the Fourier multiplier `m(k)` to a field.
pub fn fourier_multiply(f: &ComplexField, m: impl Fn(f64) -> f64) -> ComplexField {
    let g = f.grid;
    let mut spec = f.spectrum();
    for (i, s) in spec.iter_mut().enumerate() {
        *s *= m(g.wavenumber(i));
    }
    ComplexField::from_spectrum(g, spec)
}

/// `(a - d^2) f`.
pub fn helmholtz(f: &ComplexField, a: f64) -> ComplexField {
    fourier_multiply(f, |k| a + k * k)
}

/// `(a - d^2)^{-1} f`; requires `a > 0`.
pub fn helmholtz_inverse(f: &ComplexField, a: f64) -> ComplexField {
    fourier_multiply(f, |k| 1.0 / (a + k * k))
}

/// Real inner product `Re int u conj(v) dx` by the rectangle rule.
pub fn real_inner(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    u.grid.check_same(&v.grid)?;
    Ok(real_inner_slices(&u.values, &v.values) * u.grid.spacing())
}

pub(crate) fn real_inner_slices(u: &[Complex64], v: &[Complex64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// Complex pairing `int u conj(v) dx`.
pub fn complex_inner(u: &ComplexField, v: &ComplexField) -> Result<Complex64> {
    u.grid.check_same(&v.grid)?;
    let s: Complex64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b.conj()).sum();
    Ok(s * u.grid.spacing())
}

/// `<u, (a - d^2) v>`, evaluated spectrally.
pub fn sobolev_inner(u: &ComplexField, v: &ComplexField, a: f64) -> Result<f64> {
    u.grid.check_same(&v.grid)?;
    real_inner(u, &helmholtz(v, a))
}

pub fn l2_norm(f: &ComplexField) -> f64 {
    mass_functional(f).sqrt()
}

/// `M(f) = int |f|^2 dx`.
pub fn mass_functional(f: &ComplexField) -> f64 {
    f.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid.spacing()
}

/// `int |f|^4 dx`.
pub fn quartic_integral(f: &ComplexField) -> f64 {
    f.values.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * f.grid.spacing()
}

/// `int |f'|^2 dx`, computed on the Fourier side (Nyquist mode included).
pub fn gradient_energy(f: &ComplexField) -> f64 {
    let g = f.grid;
    let spec = f.spectrum();
    let s: f64 = spec
        .iter()
        .enumerate()
        .map(|(i, z)| g.wavenumber(i).powi(2) * z.norm_sqr())
        .sum();
    s * g.spacing() / g.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub kinetic: f64,
    pub quartic: f64,
    pub total: f64,
}

/// `H = K - U` with `K = 1/2 int |f'|^2` and `U = 1/4 int |f|^4`.
pub fn hamiltonian(f: &ComplexField) -> Energy {
    let kinetic = 0.5 * gradient_energy(f);
    let quartic = 0.25 * quartic_integral(f);
    Energy {
        kinetic,
        quartic,
        total: kinetic - quartic,
    }
}

/// Sum of `|f_hat|^2` normalized so that it equals `M(f)` (Parseval).
pub fn spectral_mass(f: &ComplexField) -> f64 {
    let g = f.grid;
    f.spectrum().iter().map(|z| z.norm_sqr()).sum::<f64>() * g.spacing() / g.n() as f64
}

/// Trigonometric interpolation of a field onto another grid of the same
/// period, or onto a longer period when the field is negligible near its
/// own boundary (`x` outside `[-l, l)` gets zero).
pub fn resample(f: &ComplexField, target: TorusGrid) -> ComplexField {
    let src = f.grid;
    let spec = f.spectrum();
    let n = src.n() as f64;
    let same_period = (src.half_length() - target.half_length()).abs() < 1e-12 * src.half_length();
    ComplexField::from_fn(target, |x| {
        if !same_period && (x < -src.half_length() || x >= src.half_length()) {
            return Complex64::new(0.0, 0.0);
        }
        let xs = x + src.half_length();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, s) in spec.iter().enumerate() {
            let k = src.wavenumber(i);
            if src.is_nyquist(i) {
                acc += s * (k * xs).cos();
            } else {
                acc += s * Complex64::from_polar(1.0, k * xs);
            }
        }
        acc / n
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_examples() {
        assert_eq!(make_grid(64, 8.0).unwrap().spacing(), 0.25);
        assert_eq!(make_grid(8, 1.0).unwrap().spacing(), 0.25);
        assert!(make_grid(7, 1.0).is_err());
        assert!(make_grid(6, 1.0).is_err());
        assert!(make_grid(8, 0.0).is_err());
        assert!(make_grid(8, -1.0).is_err());
    }

    #[test]
    fn wavenumber_table() {
        let g = make_grid(8, 2.0).unwrap();
        let modes: Vec<i64> = (0..8).map(|i| g.mode(i)).collect();
        assert_eq!(modes, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert!((g.wavenumber(1) - PI / 2.0).abs() < 1e-15);
        let odd = TorusGrid::lattice(3, 1.0).unwrap();
        assert_eq!((0..3).map(|i| odd.mode(i)).collect::<Vec<_>>(), vec![0, 1, -1]);
    }

    #[test]
    fn derivative_of_plane_wave_and_constant() {
        let g = make_grid(32, 3.0).unwrap();
        let c = ComplexField::from_fn(g, |_| Complex64::new(2.0, -1.0));
        assert!(spectral_derivative(&c, 1).max_abs() < 1e-13);
        let l = g.half_length();
        let w = ComplexField::from_fn(g, |x| Complex64::from_polar(1.0, PI * x / l));
        let d2 = spectral_derivative(&w, 2);
        let expect = w.scale(-(PI / l).powi(2));
        assert!(d2.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn constant_integrals() {
        let g = make_grid(16, 5.0).unwrap();
        let one = ComplexField::from_fn(g, |_| Complex64::new(1.0, 0.0));
        assert!((real_inner(&one, &one).unwrap() - 10.0).abs() < 1e-12);
        let c = ComplexField::from_fn(g, |_| Complex64::new(0.3, 0.4));
        assert!((mass_functional(&c) - 10.0 * 0.25).abs() < 1e-12);
        assert_eq!(mass_functional(&ComplexField::zeros(g)), 0.0);
        assert_eq!(hamiltonian(&ComplexField::zeros(g)).total, 0.0);
    }

    #[test]
    fn roll_matches_translate_on_grid_shifts() {
        let g = make_grid(64, 4.0).unwrap();
        let f = ComplexField::from_fn(g, |x| Complex64::new((-x * x).exp(), (x).sin() * (-x * x / 2.0).exp()));
        let a = f.roll(5);
        let b = f.translate(5.0 * g.spacing());
        assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn reflect_fixes_origin() {
        let g = make_grid(16, 2.0).unwrap();
        let f = ComplexField::from_fn(g, |x| Complex64::new(x, 0.0));
        let r = f.reflect();
        for j in 0..16 {
            let x = g.x(j);
            if (x + g.half_length()).abs() < 1e-12 {
                continue;
            }
            assert!((r.values()[j].re + x).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_is_exact_for_band_limited() {
        let g = make_grid(16, PI).unwrap();
        let f = ComplexField::from_fn(g, |x| Complex64::new((2.0 * x).cos(), (3.0 * x).sin()));
        let t = make_grid(40, PI).unwrap();
        let r = resample(&f, t);
        let e = ComplexField::from_fn(t, |x| Complex64::new((2.0 * x).cos(), (3.0 * x).sin()));
        assert!(r.sub(&e).unwrap().max_abs() < 1e-12);
    }
}
