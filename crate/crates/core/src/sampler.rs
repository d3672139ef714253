//! Free fields, projected Schrodinger Gaussians, Markov chains for the
//! mass-cutoff Gibbs measure and a small-lattice importance-sampling oracle.
//!
//! The Gibbs density relative to the free field is `exp(c V(phi)) 1{M(phi) < L D}`
//! with `V = 1/4 int |phi|^4` and coupling `c` (1 for the physical measure).
//! On a grid with spacing `h`, the real and imaginary parts of the free field
//! are independent with covariance `(h A)^{-1}`, `A` the matrix of `m - d^2`.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::groundstate::{closed_form_soliton, multiplier_for_mass};
use crate::lattice::{fft_forward, fft_inverse, mass_functional, ComplexField, TorusGrid};
use crate::linalg::dot;
use crate::schrodinger::CovarianceHandle;

/// Deterministic stream for `(seed, chain_id)`.
pub fn stream_rng(seed: u64, chain_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gaussian free field `m - d^2` on a grid, or `-d^2` on the mean-zero
/// sector when `massless` is set.
#[derive(Debug, Clone)]
pub struct FreeField {
    grid: TorusGrid,
    mass: f64,
    massless: bool,
    /// `m + k^2` per FFT slot, zero for the excluded mode.
    symbol: Vec<f64>,
}

impl FreeField {
    pub fn new(grid: TorusGrid, mass: f64, massless: bool) -> Result<Self> {
        if !massless && !(mass > 0.0 && mass.is_finite()) {
            return invalid(format!("free-field mass must be positive, got {mass}"));
        }
        let m = if massless { 0.0 } else { mass };
        let symbol = (0..grid.n())
            .map(|i| if massless && i == 0 { 0.0 } else { m + grid.wavenumber(i).powi(2) })
            .collect();
        Ok(Self {
            grid,
            mass: m,
            massless,
            symbol,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_massless(&self) -> bool {
        self.massless
    }

    fn multiply(&self, v: &mut [Complex64], f: impl Fn(f64) -> f64) {
        fft_forward(v);
        for (z, s) in v.iter_mut().zip(&self.symbol) {
            *z *= if *s == 0.0 { 0.0 } else { f(*s) };
        }
        fft_inverse(v);
    }

    /// One draw of the complex free field.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = (0..self.grid.n())
            .map(|_| {
                let re = normal(rng);
                Complex64::new(re, normal(rng))
            })
            .collect();
        let h = self.grid.spacing();
        self.multiply(&mut v, |s| 1.0 / (h * s).sqrt());
        v
    }

    /// `A^{-1} v` (zero on the excluded mode).
    pub fn inverse_apply(&self, v: &mut [Complex64]) {
        self.multiply(v, |s| 1.0 / s);
    }

    /// `<A v, v> = int (m |v|^2 + |v'|^2)`.
    pub fn quadratic(&self, v: &[Complex64]) -> f64 {
        let mut buf = v.to_vec();
        fft_forward(&mut buf);
        let n = self.grid.n() as f64;
        buf.iter().zip(&self.symbol).map(|(z, s)| s * z.norm_sqr()).sum::<f64>() * self.grid.spacing() / n
    }

    /// `E |c_k|^2 = 2/(m + k^2)` for the coefficient `c_k = <phi, e_k>` of
    /// the normalized mode `e_k = e^{ikx}/sqrt(2l)`.
    pub fn mode_variance(&self, i: usize) -> f64 {
        if self.symbol[i] == 0.0 {
            0.0
        } else {
            2.0 / self.symbol[i]
        }
    }

    /// Normalized mode coefficients `c_k`, in FFT order.
    pub fn mode_coefficients(&self, f: &ComplexField) -> Vec<Complex64> {
        let g = &self.grid;
        let s = g.spacing() / g.period().sqrt();
        f.spectrum().into_iter().map(|z| z * s).collect()
    }

    /// `E M(phi)` without the cutoff.
    pub fn expected_mass(&self) -> f64 {
        (0..self.grid.n()).map(|i| self.mode_variance(i)).sum()
    }
}

/// Free-field sample with covariance `(k^2 + m)^{-1}` per real component.
pub fn sample_free_field(grid: TorusGrid, mass: f64, seed: u64) -> Result<ComplexField> {
    let ff = FreeField::new(grid, mass, false)?;
    let mut rng = stream_rng(seed, 0);
    ComplexField::new(grid, ff.draw(&mut rng))
}

/// One draw `Re = F_re z / sqrt(h)`, `Im = F_im z' / sqrt(h)`.
pub fn schrodinger_gaussian_draw(
    cov_re: &CovarianceHandle,
    cov_im: &CovarianceHandle,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexField> {
    let grid = *cov_re.grid();
    if cov_im.grid().n() != grid.n() {
        return invalid("real and imaginary covariances live on different grids");
    }
    let n = grid.n();
    let z1: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let z2: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let re = cov_re.sample_from_normals(&z1)?;
    let im = cov_im.sample_from_normals(&z2)?;
    ComplexField::from_parts(grid, &re, &im)
}

pub fn sample_schrodinger_gaussian(cov_re: &CovarianceHandle, cov_im: &CovarianceHandle, seed: u64) -> Result<ComplexField> {
    let mut rng = stream_rng(seed, 0);
    schrodinger_gaussian_draw(cov_re, cov_im, &mut rng)
}

/// `count` draws of one real sector, as columns.
pub fn schrodinger_sector_batch(cov: &CovarianceHandle, count: usize, rng: &mut ChaCha8Rng) -> Result<Mat<f64>> {
    let n = cov.grid().n();
    let mut z = Mat::<f64>::zeros(n, count);
    for j in 0..count {
        for i in 0..n {
            z[(i, j)] = normal(rng);
        }
    }
    cov.sample_batch(&z)
}

/// Largest `|<w, u>| / (|w| |u|)` over the projector constraints.
pub fn orthogonality_residual(cov: &CovarianceHandle, u: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt().max(f64::MIN_POSITIVE);
    cov.projector
        .constraints()
        .iter()
        .map(|w| dot(w, u).abs() / (dot(w, w).sqrt() * nu))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// Autoregressive proposal `sqrt(1 - b^2) phi + b xi`, `b = step_size`.
    Pcn,
    /// Hamiltonian moves whose Gaussian part is integrated exactly, with
    /// specular reflection at the mass wall. `step_size` is the time step.
    Hmc { n_leapfrog: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Rescaled ground state `L Q(L x)` at 95% of the allowed mass.
    Soliton,
    /// A free-field draw, scaled into the mass ball if needed.
    FreeField,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub grid: TorusGrid,
    pub torus_l: f64,
    pub mass_d: f64,
    pub step_size: f64,
    pub n_steps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub chain_id: u64,
    pub base_mass: f64,
    pub massless: bool,
    /// Quartic coupling multiplying `V`.
    pub coupling: f64,
    pub kernel: Kernel,
    /// Robbins-Monro step-size tuning during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
    /// Exact symmetry moves (global phase, lattice translation, reflection).
    pub symmetry_moves: bool,
    pub init: Init,
}

impl ChainConfig {
    /// Autoregressive chain on `T_L` with `n` points and the defaults.
    pub fn new(n_points: usize, torus_l: f64, mass_d: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            grid: TorusGrid::lattice(n_points, torus_l)?,
            torus_l,
            mass_d,
            step_size: 0.15,
            n_steps: 10_000,
            burn_in: 1_000,
            thin: 1,
            seed,
            chain_id: 0,
            base_mass: 1.0,
            massless: false,
            coupling: 1.0,
            kernel: Kernel::Pcn,
            adapt: false,
            target_acceptance: 0.3,
            symmetry_moves: false,
            init: Init::FreeField,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hamiltonian chain with tuned defaults.
    pub fn hmc(n_points: usize, torus_l: f64, mass_d: f64, seed: u64) -> Result<Self> {
        let mut cfg = Self::new(n_points, torus_l, mass_d, seed)?;
        cfg.kernel = Kernel::Hmc { n_leapfrog: 8 };
        cfg.step_size = 0.15;
        cfg.adapt = true;
        cfg.target_acceptance = 0.75;
        cfg.symmetry_moves = true;
        cfg.init = Init::Soliton;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return invalid(format!("step_size must lie in (0,1], got {}", self.step_size));
        }
        if self.burn_in >= self.n_steps {
            return invalid(format!("burn_in ({}) must be below n_steps ({})", self.burn_in, self.n_steps));
        }
        if self.thin == 0 {
            return invalid("thin must be at least 1");
        }
        if !(self.mass_d > 0.0 && self.mass_d.is_finite()) {
            return invalid(format!("mass D must be positive, got {}", self.mass_d));
        }
        if !(self.torus_l > 0.0 && self.torus_l.is_finite()) {
            return invalid(format!("torus L must be positive, got {}", self.torus_l));
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return invalid("coupling must be finite and non-negative");
        }
        if !self.massless && !(self.base_mass > 0.0) {
            return invalid("base mass must be positive (or set massless)");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return invalid("target acceptance must lie in (0,1)");
        }
        if let Kernel::Hmc { n_leapfrog } = self.kernel {
            if n_leapfrog == 0 {
                return invalid("n_leapfrog must be at least 1");
            }
        }
        Ok(())
    }

    /// Mass bound `L D`.
    pub fn mass_bound(&self) -> f64 {
        self.torus_l * self.mass_d
    }
}

/// Snapshot of a running chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub field: ComplexField,
    pub step_index: u64,
    pub accepted: u64,
    /// Accepted moves after burn-in.
    pub accepted_after_burn_in: u64,
    /// Current (possibly tuned) step size.
    pub step_size: f64,
    rng: ChaCha8Rng,
}

/// Position of the random stream: `(stream, word position)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPosition {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl ChainState {
    pub fn rng_position(&self, seed: u64) -> RngPosition {
        RngPosition {
            seed,
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(
        field: ComplexField,
        step_index: u64,
        accepted: u64,
        accepted_after_burn_in: u64,
        step_size: f64,
        pos: RngPosition,
    ) -> Self {
        let mut rng = stream_rng(pos.seed, pos.stream);
        rng.set_word_pos(pos.word_pos);
        Self {
            field,
            step_index,
            accepted,
            accepted_after_burn_in,
            step_size,
            rng,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub accept_prob: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub steps: u64,
    pub snapshots: u64,
    pub acceptance_rate: f64,
    pub final_step_size: f64,
    pub tuning_warning: Option<String>,
}

pub struct Chain {
    cfg: ChainConfig,
    free: FreeField,
    state: ChainState,
}

/// `1/4 int |f|^4`.
fn quartic_v(v: &[Complex64], h: f64) -> f64 {
    0.25 * h * v.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>()
}

fn mass_of(v: &[Complex64], h: f64) -> f64 {
    h * v.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn subtract_mean(v: &mut [Complex64]) {
    let m = v.iter().sum::<Complex64>() / v.len() as f64;
    v.iter_mut().for_each(|z| *z -= m);
}

impl Chain {
    pub fn new(cfg: ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let free = FreeField::new(cfg.grid, cfg.base_mass, cfg.massless)?;
        let mut rng = stream_rng(cfg.seed, cfg.chain_id);
        let h = cfg.grid.spacing();
        let bound = cfg.mass_bound();
        let mut v = match cfg.init {
            Init::Zero => vec![Complex64::new(0.0, 0.0); cfg.grid.n()],
            Init::FreeField => free.draw(&mut rng),
            Init::Soliton => {
                let l = cfg.torus_l;
                let big = TorusGrid::lattice(cfg.grid.n(), cfg.grid.half_length() * l)?;
                let q = closed_form_soliton(multiplier_for_mass(cfg.mass_d), &big, 0.0, 0.0)?;
                q.values().iter().map(|z| z * l).collect()
            }
        };
        if cfg.massless {
            subtract_mean(&mut v);
        }
        let m = mass_of(&v, h);
        let cap = if cfg.init == Init::Soliton { 0.95 } else { 0.9 };
        if m >= cap * bound {
            let s = (cap * bound / m).sqrt();
            v.iter_mut().for_each(|z| *z *= s);
        }
        let state = ChainState {
            field: ComplexField::new(cfg.grid, v)?,
            step_index: 0,
            accepted: 0,
            accepted_after_burn_in: 0,
            step_size: cfg.step_size,
            rng,
        };
        Ok(Self { cfg, free, state })
    }

    /// Continue from a saved state.
    pub fn from_state(cfg: ChainConfig, state: ChainState) -> Result<Self> {
        cfg.validate()?;
        if state.field.grid().n() != cfg.grid.n() {
            return invalid("checkpoint field does not match the configured grid");
        }
        let free = FreeField::new(cfg.grid, cfg.base_mass, cfg.massless)?;
        Ok(Self { cfg, free, state })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn free_field(&self) -> &FreeField {
        &self.free
    }

    pub fn step(&mut self) -> Result<StepInfo> {
        let info = match self.cfg.kernel {
            Kernel::Pcn => self.pcn_step(),
            Kernel::Hmc { n_leapfrog } => self.hmc_step(n_leapfrog),
        };
        if self.cfg.symmetry_moves {
            self.symmetry_move();
        }
        let st = &mut self.state;
        if info.accepted {
            st.accepted += 1;
            if st.step_index >= self.cfg.burn_in {
                st.accepted_after_burn_in += 1;
            }
        }
        if self.cfg.adapt && st.step_index < self.cfg.burn_in {
            let gain = 1.0 / (st.step_index as f64 + 10.0).powf(0.6);
            let upper = match self.cfg.kernel {
                Kernel::Pcn => 1.0,
                Kernel::Hmc { n_leapfrog } => (std::f64::consts::FRAC_PI_2 / n_leapfrog as f64).min(1.0),
            };
            st.step_size = (st.step_size.ln() + gain * (info.accept_prob - self.cfg.target_acceptance))
                .exp()
                .clamp(1e-6, upper);
        }
        st.step_index += 1;
        let m = mass_functional(&st.field);
        let bound = self.cfg.mass_bound();
        if m > bound * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("mass constraint violated: {m} > {bound}")));
        }
        Ok(info)
    }

    fn pcn_step(&mut self) -> StepInfo {
        let h = self.cfg.grid.spacing();
        let b = self.state.step_size;
        let a = (1.0 - b * b).sqrt();
        let xi = self.free.draw(&mut self.state.rng);
        let u: f64 = self.state.rng.random();
        let cur = self.state.field.values();
        let prop: Vec<Complex64> = cur.iter().zip(&xi).map(|(c, x)| c * a + x * b).collect();
        if mass_of(&prop, h) >= self.cfg.mass_bound() {
            return StepInfo {
                accept_prob: 0.0,
                accepted: false,
            };
        }
        let dv = self.cfg.coupling * (quartic_v(&prop, h) - quartic_v(cur, h));
        let p = dv.min(0.0).exp();
        let accepted = u < p;
        if accepted {
            self.state.field = ComplexField::new(self.cfg.grid, prop).expect("finite proposal");
        }
        StepInfo {
            accept_prob: p,
            accepted,
        }
    }

    fn kick(&self, q: &[Complex64], v: &mut [Complex64], dt: f64) {
        let c = self.cfg.coupling;
        if c == 0.0 {
            return;
        }
        let mut f: Vec<Complex64> = q.iter().map(|z| z * (c * z.norm_sqr())).collect();
        self.free.inverse_apply(&mut f);
        v.iter_mut().zip(&f).for_each(|(a, b)| *a += b * dt);
    }

    /// Exact harmonic flow for time `tau`, reflecting off `M = L D`.
    fn rotate_with_wall(&self, q: &mut [Complex64], v: &mut [Complex64], tau: f64) -> bool {
        let h = self.cfg.grid.spacing();
        let r = self.cfg.mass_bound();
        let mut remaining = tau;
        for _ in 0..1000 {
            let a = mass_of(q, h);
            let c = mass_of(v, h);
            let b = h * re_dot(q, v);
            let cc = 0.5 * (a + c) - r;
            let rr = (0.25 * (a - c).powi(2) + b * b).sqrt();
            let hit = if rr == 0.0 || cc + rr <= 0.0 {
                None
            } else {
                let x = (-cc / rr).clamp(-1.0, 1.0);
                let phi0 = b.atan2(0.5 * (a - c));
                let ac = x.acos();
                let tau_p = std::f64::consts::TAU;
                let k = ((2e-12 - phi0 + ac) / tau_p).ceil();
                let t = 0.5 * (phi0 - ac + k * tau_p);
                (t <= remaining).then_some(t)
            };
            let t = hit.unwrap_or(remaining);
            let (s, co) = t.sin_cos();
            for (qi, vi) in q.iter_mut().zip(v.iter_mut()) {
                let (q0, v0) = (*qi, *vi);
                *qi = q0 * co + v0 * s;
                *vi = v0 * co - q0 * s;
            }
            if hit.is_none() {
                return true;
            }
            // specular reflection in the kinetic metric
            let mut aq = q.to_vec();
            self.free.inverse_apply(&mut aq);
            let num = re_dot(q, v);
            let den = re_dot(q, &aq);
            if !(den > 0.0) {
                return false;
            }
            let f = 2.0 * num / den;
            v.iter_mut().zip(&aq).for_each(|(vi, ai)| *vi -= ai * f);
            remaining -= t;
        }
        false
    }

    fn hamiltonian(&self, q: &[Complex64], v: &[Complex64]) -> f64 {
        let h = self.cfg.grid.spacing();
        0.5 * self.free.quadratic(q) + 0.5 * self.free.quadratic(v) - self.cfg.coupling * quartic_v(q, h)
    }

    fn hmc_step(&mut self, n_leapfrog: usize) -> StepInfo {
        let h = self.cfg.grid.spacing();
        let jitter = 0.8 + 0.4 * self.state.rng.random::<f64>();
        let eps = self.state.step_size * jitter;
        let mut v = self.free.draw(&mut self.state.rng);
        let u: f64 = self.state.rng.random();
        let mut q = self.state.field.values().to_vec();
        let h0 = self.hamiltonian(&q, &v);
        let mut ok = true;
        for _ in 0..n_leapfrog {
            self.kick(&q, &mut v, 0.5 * eps);
            if !self.rotate_with_wall(&mut q, &mut v, eps) {
                ok = false;
                break;
            }
            self.kick(&q, &mut v, 0.5 * eps);
        }
        if !ok || !(mass_of(&q, h) < self.cfg.mass_bound()) {
            return StepInfo {
                accept_prob: 0.0,
                accepted: false,
            };
        }
        let h1 = self.hamiltonian(&q, &v);
        let p = if h1.is_finite() { (h0 - h1).min(0.0).exp() } else { 0.0 };
        let accepted = u < p;
        if accepted {
            self.state.field = ComplexField::new(self.cfg.grid, q).expect("finite trajectory");
        }
        StepInfo {
            accept_prob: p,
            accepted,
        }
    }

    fn symmetry_move(&mut self) {
        let rng = &mut self.state.rng;
        let alpha: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let shift = rng.random_range(0..self.cfg.grid.n() as i64);
        let flip: bool = rng.random();
        let mut f = self.state.field.rotate(alpha).roll(shift);
        if flip {
            f = f.reflect();
        }
        self.state.field = f;
    }

    /// Advance to step `until`, calling `observer` on every retained
    /// post-burn-in snapshot.
    pub fn run_until(&mut self, until: u64, mut observer: impl FnMut(&ChainState)) -> Result<()> {
        while self.state.step_index < until {
            self.step()?;
            let s = self.state.step_index;
            if s > self.cfg.burn_in && (s - self.cfg.burn_in) % self.cfg.thin == 0 {
                observer(&self.state);
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> ChainSummary {
        let post = self.state.step_index.saturating_sub(self.cfg.burn_in);
        let rate = if post > 0 {
            self.state.accepted_after_burn_in as f64 / post as f64
        } else {
            f64::NAN
        };
        let tuning_warning = (post > 0 && !(0.05..=0.95).contains(&rate))
            .then(|| format!("post-burn-in acceptance rate {rate:.3} outside [0.05, 0.95]"));
        if let Some(w) = &tuning_warning {
            log::warn!("{w}");
        }
        ChainSummary {
            steps: self.state.step_index,
            snapshots: post / self.cfg.thin,
            acceptance_rate: rate,
            final_step_size: self.state.step_size,
            tuning_warning,
        }
    }
}

/// Run a full chain, streaming thinned post-burn-in snapshots.
pub fn run_mcmc_chain(cfg: ChainConfig, observer: impl FnMut(&ChainState)) -> Result<ChainSummary> {
    let n = cfg.n_steps;
    let mut chain = Chain::new(cfg)?;
    chain.run_until(n, observer)?;
    Ok(chain.summary())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub grid: TorusGrid,
    pub torus_l: f64,
    pub mass_d: f64,
    pub coupling: f64,
    pub base_mass: f64,
    pub massless: bool,
    pub n_draws: usize,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(n_points: usize, torus_l: f64, mass_d: f64, n_draws: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            grid: TorusGrid::lattice(n_points, torus_l)?,
            torus_l,
            mass_d,
            coupling: 1.0,
            base_mass: 1.0,
            massless: false,
            n_draws,
            seed,
        })
    }
}

/// Weighted iid free-field draws, `w = exp(c V) 1{M < L D}`.
#[derive(Debug, Clone)]
pub struct ImportanceSample {
    pub fields: Vec<ComplexField>,
    pub log_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEstimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// `E M(phi)`.
    pub mass: WeightedEstimate,
    /// `E int |phi|^4`.
    pub quartic: WeightedEstimate,
    /// `log E_free[w]`, the log partition function relative to the free field.
    pub log_z: WeightedEstimate,
    pub ess: f64,
    pub n_draws: usize,
}

impl ImportanceSample {
    fn normalized(&self) -> (Vec<f64>, f64) {
        let mx = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - mx).exp()).collect();
        (w, mx)
    }

    pub fn ess(&self) -> f64 {
        let (w, _) = self.normalized();
        let s: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        if s2 == 0.0 {
            0.0
        } else {
            s * s / s2
        }
    }

    /// Self-normalized estimate of `E f` with its delta-method error.
    pub fn estimate(&self, f: impl Fn(&ComplexField) -> f64) -> WeightedEstimate {
        let (w, _) = self.normalized();
        let s: f64 = w.iter().sum();
        let vals: Vec<f64> = self.fields.iter().map(f).collect();
        let m = vals.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / s;
        let var = vals.iter().zip(&w).map(|(v, wi)| (wi * (v - m)).powi(2)).sum::<f64>() / (s * s);
        WeightedEstimate {
            value: m,
            stderr: var.sqrt(),
        }
    }

    /// `log mean(w)` with its error.
    pub fn log_mean_weight(&self) -> WeightedEstimate {
        let (w, mx) = self.normalized();
        let n = w.len() as f64;
        let m = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        WeightedEstimate {
            value: m.ln() + mx,
            stderr: (var / n).sqrt() / m,
        }
    }
}

pub fn importance_sample(cfg: &OracleConfig) -> Result<ImportanceSample> {
    if cfg.n_draws < 2 {
        return invalid("need at least two draws");
    }
    let ff = FreeField::new(cfg.grid, cfg.base_mass, cfg.massless)?;
    let mut rng = stream_rng(cfg.seed, 0);
    let h = cfg.grid.spacing();
    let bound = cfg.torus_l * cfg.mass_d;
    let mut fields = Vec::with_capacity(cfg.n_draws);
    let mut log_weights = Vec::with_capacity(cfg.n_draws);
    for _ in 0..cfg.n_draws {
        let v = ff.draw(&mut rng);
        let lw = if mass_of(&v, h) < bound {
            cfg.coupling * quartic_v(&v, h)
        } else {
            f64::NEG_INFINITY
        };
        fields.push(ComplexField::new(cfg.grid, v)?);
        log_weights.push(lw);
    }
    if log_weights.iter().all(|l| *l == f64::NEG_INFINITY) {
        return Err(Error::Unreliable { ess: 0.0, required: 100.0 });
    }
    Ok(ImportanceSample { fields, log_weights })
}

/// Self-normalized importance sampling with iid free-field proposals on a
/// tiny lattice.
pub fn smallscale_quadrature_oracle(cfg: &OracleConfig) -> Result<MomentReport> {
    if cfg.grid.n() > 4 {
        return invalid(format!("oracle lattice must have at most 4 sites, got {}", cfg.grid.n()));
    }
    let is = importance_sample(cfg)?;
    let ess = is.ess();
    if ess < 100.0 {
        return Err(Error::Unreliable { ess, required: 100.0 });
    }
    Ok(MomentReport {
        mass: is.estimate(mass_functional),
        quartic: is.estimate(crate::lattice::quartic_integral),
        log_z: is.log_mean_weight(),
        ess,
        n_draws: cfg.n_draws,
    })
}

/// Exact draws from the Gibbs measure by rejection from the free field,
/// using `int |phi|^4 <= M^2/h` on the lattice.
pub fn rejection_sample(cfg: &OracleConfig, n_accept: usize, max_tries: usize) -> Result<Vec<ComplexField>> {
    let ff = FreeField::new(cfg.grid, cfg.base_mass, cfg.massless)?;
    let mut rng = stream_rng(cfg.seed, 1);
    let h = cfg.grid.spacing();
    let bound = cfg.torus_l * cfg.mass_d;
    let vmax = cfg.coupling * 0.25 * bound * bound / h;
    let mut out = Vec::with_capacity(n_accept);
    for _ in 0..max_tries {
        if out.len() == n_accept {
            break;
        }
        let v = ff.draw(&mut rng);
        let u: f64 = rng.random();
        if mass_of(&v, h) < bound && u.ln() < cfg.coupling * quartic_v(&v, h) - vmax {
            out.push(ComplexField::new(cfg.grid, v)?);
        }
    }
    if out.len() < n_accept {
        return Err(Error::ConvergenceFailure {
            iterations: max_tries,
            residual: out.len() as f64 / n_accept as f64,
        });
    }
    Ok(out)
}
