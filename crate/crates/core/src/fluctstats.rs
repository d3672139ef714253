//! Statistics of the fluctuation field: test functions, characteristic
//! function and variance estimators, concentration diagnostics and the free
//! energy.

use faer::Mat;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{mass_functional, weighted_norm, ComplexField, NormSpec, TorusGrid};
use crate::manifold::{ManifoldChart, SectorGeometry, SolitonManifold};
use crate::sampler::{run_mcmc_chain, stream_rng, ChainConfig, FreeField, Kernel, WeightedEstimate};
use crate::schrodinger::{
    build_operators, normal_projectors, ou_operator, projected_covariance, translation_projector, CovarianceHandle,
};
use crate::stats::{block_jackknife, effective_sample_size, integrated_autocorrelation_time, mean, Estimate};

/// Version tag of the JSON report schema.
pub const REPORT_VERSION: &str = "phi4lab-report/1";

/// Smooth bump `a * exp(1 - 1/(1 - u^2))`, `u = (y - center)/half_width`,
/// normalized so that its `L^2` norm is `norm`. Lives on `T_L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: f64,
    pub half_width: f64,
    amplitude: f64,
}

fn bump_shape(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// `int_{-1}^{1} bump(u)^2 du`, by composite Simpson on a fine mesh.
fn bump_sq_integral() -> f64 {
    let m = 20_000;
    let hh = 2.0 / m as f64;
    let mut s = 0.0;
    for i in 0..=m {
        let u = -1.0 + i as f64 * hh;
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * bump_shape(u).powi(2);
    }
    s * hh / 3.0
}

impl TestFunction {
    /// Bump with the given `L^2` norm.
    pub fn bump(center: f64, half_width: f64, norm: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return invalid(format!("half_width must be positive, got {half_width}"));
        }
        if !center.is_finite() || !norm.is_finite() {
            return invalid("test function parameters must be finite");
        }
        let amplitude = norm / (half_width * bump_sq_integral()).sqrt();
        Ok(Self {
            center,
            half_width,
            amplitude,
        })
    }

    /// Default: half width 1, unit norm.
    pub fn unit(center: f64) -> Result<Self> {
        Self::bump(center, 1.0, 1.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            amplitude: self.amplitude * c,
            ..*self
        }
    }

    /// Value at a point of the real line (no wrapping).
    pub fn eval(&self, y: f64) -> f64 {
        self.amplitude * bump_shape((y - self.center) / self.half_width)
    }

    /// Value on the torus of half length `l`.
    pub fn eval_periodic(&self, y: f64, l: f64) -> f64 {
        let p = 2.0 * l;
        let d = (y - self.center + l).rem_euclid(p) - l;
        self.amplitude * bump_shape(d / self.half_width)
    }

    pub fn support_interval(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.amplitude * self.amplitude * self.half_width * bump_sq_integral()
    }

    /// Samples of `g` on a grid of `T_L` (`grid.half_length() == L`).
    pub fn on_grid(&self, grid: &TorusGrid) -> Vec<f64> {
        let l = grid.half_length();
        (0..grid.n()).map(|j| self.eval_periodic(grid.x(j), l)).collect()
    }

    /// Samples of `g_L(x) = L^{-1/2} g(x/L)` on a grid of `T_{L^2}`.
    pub fn rescaled_on_grid(&self, grid: &TorusGrid, torus_l: f64) -> Vec<f64> {
        let s = torus_l.powf(-0.5);
        (0..grid.n())
            .map(|j| s * self.eval_periodic(grid.x(j) / torus_l, torus_l))
            .collect()
    }

    /// Whether `x0` (a point of `T_{L^2}`) lies in the support of `g_L`.
    pub fn rescaled_support_contains(&self, x0: f64, torus_l: f64) -> bool {
        let p = 2.0 * torus_l;
        let y = x0 / torus_l;
        let d = (y - self.center + torus_l).rem_euclid(p) - torus_l;
        d.abs() < self.half_width
    }
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Re,
    Im,
}

/// `T_L` for one sample together with its chart.
#[derive(Debug, Clone)]
pub struct FluctuationSample {
    /// `L (phi - Q_{x0,theta,L})` on the grid of `T_L`.
    pub field: ComplexField,
    pub x0: f64,
    pub theta: f64,
    pub distance: f64,
}

/// Rescale a field on `T_L` to `psi(x) = phi(x/L)/L` on `T_{L^2}` (same
/// number of points).
pub fn to_large_torus(phi: &ComplexField, manifold: &SolitonManifold) -> Result<ComplexField> {
    let l = manifold.torus_l();
    let g = phi.grid();
    if g.n() != manifold.grid().n() || (g.half_length() - l).abs() > 1e-12 * l {
        return invalid("sample grid must be the T_L grid matching the manifold grid");
    }
    ComplexField::new(*manifold.grid(), phi.values().iter().map(|z| z / l).collect())
}

/// `T_L(phi) = L (phi - pi_L(phi))`, or `None` outside the tube of radius
/// `delta sqrt(L)` (`delta` in the rescaled units of the manifold).
pub fn fluctuation_field(
    sample: &ComplexField,
    manifold: &SolitonManifold,
    delta: f64,
) -> Result<Option<FluctuationSample>> {
    let psi = to_large_torus(sample, manifold)?;
    let proj = manifold.project(&psi, delta)?;
    let Some(chart) = proj.chart else {
        return Ok(None);
    };
    let l = manifold.torus_l();
    let l2 = l * l;
    let vals = psi
        .values()
        .iter()
        .zip(chart.soliton.values())
        .map(|(p, q)| (p - q) * l2)
        .collect();
    Ok(Some(FluctuationSample {
        field: ComplexField::new(*sample.grid(), vals)?,
        x0: chart.x0,
        theta: chart.theta,
        distance: proj.distance,
    }))
}

/// `<part(f), g> = int part(f) g` on the grid of `f`.
pub fn pairing(f: &ComplexField, g_vals: &[f64], part: Part) -> f64 {
    let s: f64 = f
        .values()
        .iter()
        .zip(g_vals)
        .map(|(z, g)| match part {
            Part::Re => z.re * g,
            Part::Im => z.im * g,
        })
        .sum();
    s * f.grid().spacing()
}

/// Surrogate white noise: iid complex site values, variance `1/h` per
/// real component.
pub fn white_noise_surrogate(grid: TorusGrid, count: usize, rng: &mut ChaCha8Rng) -> Vec<ComplexField> {
    let s = grid.spacing().powf(-0.5);
    (0..count)
        .map(|_| {
            let v = (0..grid.n())
                .map(|_| {
                    let a: f64 = StandardNormal.sample(rng);
                    let b: f64 = StandardNormal.sample(rng);
                    Complex64::new(a * s, b * s)
                })
                .collect();
            ComplexField::new(grid, v).expect("finite draws")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharEstimate {
    pub re: f64,
    pub im: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    /// `e^{-|g|^2/2}`.
    pub target: f64,
    pub ess: f64,
    pub n: usize,
}

impl CharEstimate {
    /// `|estimate - target|`.
    pub fn deviation(&self) -> f64 {
        ((self.re - self.target).powi(2) + self.im * self.im).sqrt()
    }

    pub fn stderr(&self) -> f64 {
        (self.stderr_re.powi(2) + self.stderr_im.powi(2)).sqrt()
    }
}

fn weighted_mean(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>()
}

fn weighted_se(x: &[f64], w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let m = weighted_mean(x, w);
    (x.iter().zip(w).map(|(a, b)| (b * (a - m)).powi(2)).sum::<f64>()).sqrt() / s
}

/// Kish effective sample size of iid weighted draws.
pub fn weighted_ess(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Characteristic function from pairing values. Without weights the series
/// is treated as a Markov chain output (ESS from autocorrelation, block
/// jackknife errors); with weights as iid weighted draws.
pub fn char_from_pairings(values: &[f64], weights: Option<&[f64]>, norm_sq: f64, min_ess: f64) -> Result<CharEstimate> {
    let c: Vec<f64> = values.iter().map(|v| v.cos()).collect();
    let s: Vec<f64> = values.iter().map(|v| v.sin()).collect();
    let target = (-0.5 * norm_sq).exp();
    let est = match weights {
        None => {
            if values.len() < 4 {
                return Err(Error::Unreliable {
                    ess: values.len() as f64,
                    required: min_ess,
                });
            }
            let ess = effective_sample_size(&c).min(effective_sample_size(&s));
            let tau = integrated_autocorrelation_time(&c).max(integrated_autocorrelation_time(&s));
            let blocks = ((values.len() as f64 / (5.0 * tau)) as usize).clamp(2, 100);
            let (re, se_re) = block_jackknife(&c, blocks, mean);
            let (im, se_im) = block_jackknife(&s, blocks, mean);
            CharEstimate {
                re,
                im,
                stderr_re: se_re,
                stderr_im: se_im,
                target,
                ess,
                n: values.len(),
            }
        }
        Some(w) => {
            if w.len() != values.len() {
                return invalid("weights and values differ in length");
            }
            CharEstimate {
                re: weighted_mean(&c, w),
                im: weighted_mean(&s, w),
                stderr_re: weighted_se(&c, w),
                stderr_im: weighted_se(&s, w),
                target,
                ess: weighted_ess(w),
                n: values.len(),
            }
        }
    };
    if !(est.ess >= min_ess) {
        return Err(Error::Unreliable {
            ess: est.ess,
            required: min_ess,
        });
    }
    Ok(est)
}

/// `E exp(i <part(T), g>)` over fluctuation fields on `T_L`.
pub fn char_func_estimate(samples: &[ComplexField], g: &TestFunction, part: Part, min_ess: f64) -> Result<CharEstimate> {
    let Some(first) = samples.first() else {
        return Err(Error::Unreliable { ess: 0.0, required: min_ess });
    };
    let gv = g.on_grid(first.grid());
    let vals: Vec<f64> = samples.iter().map(|f| pairing(f, &gv, part)).collect();
    char_from_pairings(&vals, None, g.l2_norm_sq(), min_ess)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub stderr: f64,
    /// `|g|^2`.
    pub target: f64,
    pub ess: f64,
    pub n: usize,
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Variance of pairing values with a block-jackknife error.
pub fn variance_from_pairings(values: &[f64], norm_sq: f64, min_ess: f64) -> Result<VarianceEstimate> {
    if values.len() < 4 {
        return Err(Error::Unreliable {
            ess: values.len() as f64,
            required: min_ess,
        });
    }
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let tau = integrated_autocorrelation_time(values).max(integrated_autocorrelation_time(&sq));
    let ess = values.len() as f64 / tau;
    if !(ess >= min_ess) {
        return Err(Error::Unreliable { ess, required: min_ess });
    }
    let blocks = ((values.len() as f64 / (5.0 * tau)) as usize).clamp(2, 100);
    let (variance, stderr) = block_jackknife(values, blocks, sample_variance);
    Ok(VarianceEstimate {
        variance,
        stderr,
        target: norm_sq,
        ess,
        n: values.len(),
    })
}

/// Variance of `<Re T, g>` over fluctuation fields.
pub fn pairing_variance_estimate(samples: &[ComplexField], g: &TestFunction, min_ess: f64) -> Result<VarianceEstimate> {
    let Some(first) = samples.first() else {
        return Err(Error::Unreliable { ess: 0.0, required: min_ess });
    };
    let gv = g.on_grid(first.grid());
    let vals: Vec<f64> = samples.iter().map(|f| pairing(f, &gv, Part::Re)).collect();
    variance_from_pairings(&vals, g.l2_norm_sq(), min_ess)
}

/// Streams chain snapshots into `T_L` pairing series.
#[derive(Debug, Clone)]
pub struct FluctuationCollector {
    manifold: SolitonManifold,
    delta: f64,
    g_vals: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub outside: usize,
    pub ambiguous: usize,
    pub total: usize,
    /// Centres `x0` of the charts, in the coordinates of `T_{L^2}`.
    pub centers: Vec<f64>,
}

impl FluctuationCollector {
    pub fn new(manifold: SolitonManifold, delta: f64, g: &TestFunction) -> Result<Self> {
        let l = manifold.torus_l();
        let small = TorusGrid::lattice(manifold.grid().n(), l)?;
        Ok(Self {
            g_vals: g.on_grid(&small),
            manifold,
            delta,
            re: vec![],
            im: vec![],
            outside: 0,
            ambiguous: 0,
            total: 0,
            centers: vec![],
        })
    }

    pub fn observe(&mut self, phi: &ComplexField) -> Result<()> {
        self.total += 1;
        match fluctuation_field(phi, &self.manifold, self.delta) {
            Ok(Some(t)) => {
                self.re.push(pairing(&t.field, &self.g_vals, Part::Re));
                self.im.push(pairing(&t.field, &self.g_vals, Part::Im));
                self.centers.push(t.x0);
            }
            Ok(None) => self.outside += 1,
            Err(Error::AmbiguousProjection { .. }) => self.ambiguous += 1,
            Err(e) => return Err(e),
        }
        Ok(())
    }

    pub fn outside_fraction(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            (self.outside + self.ambiguous) as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    /// `L sqrt(2 Lambda)`.
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub fraction_outside_tube: f64,
    pub shell_occupancy: f64,
    pub shell_epsilon: f64,
    pub peak: PeakStats,
    pub n: usize,
    pub ambiguous: usize,
}

/// Quantile by linear interpolation of the order statistics.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let pos = p * (v.len() as f64 - 1.0);
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - f) + v[i + 1] * f
    } else {
        v[i]
    }
}

/// Default wide diagnostic shell `eps = 10^3 L^{-3} log L`.
pub fn default_shell_epsilon(torus_l: f64) -> f64 {
    1e3 * torus_l.powi(-3) * torus_l.ln()
}

/// Tube, shell and peak-height diagnostics for snapshots on `T_L`.
pub fn concentration_report(
    snapshots: &[ComplexField],
    manifold: &SolitonManifold,
    delta: f64,
    shell_epsilon: f64,
) -> Result<ConcentrationReport> {
    if snapshots.is_empty() {
        return invalid("no snapshots");
    }
    let l = manifold.torus_l();
    let d = manifold.mass_d();
    let mut outside = 0usize;
    let mut ambiguous = 0usize;
    let mut shell = 0usize;
    let mut peaks = Vec::with_capacity(snapshots.len());
    for phi in snapshots {
        let psi = to_large_torus(phi, manifold)?;
        match manifold.project(&psi, delta) {
            Ok(p) if p.chart.is_none() => outside += 1,
            Ok(_) => {}
            Err(Error::AmbiguousProjection { .. }) => {
                ambiguous += 1;
                outside += 1;
            }
            Err(e) => return Err(e),
        }
        let m = mass_functional(phi);
        if m >= l * (d - shell_epsilon) && m <= l * d {
            shell += 1;
        }
        peaks.push(phi.max_abs());
    }
    let n = snapshots.len();
    Ok(ConcentrationReport {
        fraction_outside_tube: outside as f64 / n as f64,
        shell_occupancy: shell as f64 / n as f64,
        shell_epsilon,
        peak: PeakStats {
            median: quantile(&peaks, 0.5),
            lower_quartile: quantile(&peaks, 0.25),
            upper_quartile: quantile(&peaks, 0.75),
            target: l * (2.0 * manifold.lambda()).sqrt(),
        },
        n,
        ambiguous,
    })
}

/// Gaussian fields of the normal sector around one chart: the real part has
/// covariance `C1` (restricted inverse of `B1`), the imaginary part `C2`,
/// both in the chart's phase frame. `ambient` is the Ornstein-Uhlenbeck
/// covariance with the translation direction removed, used for `gamma`.
pub struct GaussianSector {
    pub chart: ManifoldChart,
    pub cov_re: CovarianceHandle,
    pub cov_im: CovarianceHandle,
    pub ambient: CovarianceHandle,
    pub geometry: SectorGeometry,
}

/// One chunk of sector draws, columns are samples in the phase frame.
pub struct SectorChunk {
    pub re: Mat<f64>,
    pub im: Mat<f64>,
}

impl GaussianSector {
    pub fn build(manifold: &SolitonManifold, x0: f64, theta: f64) -> Result<Self> {
        let chart = manifold.chart(x0, theta)?;
        let grid = *manifold.grid();
        let lam = manifold.lambda();
        let q = ComplexField::from_real(grid, &chart.real_profile())?;
        let (b1, b2) = build_operators(&q, lam, grid)?;
        let (p_re, p_im) = normal_projectors(&chart, lam)?;
        let cov_re = projected_covariance(&b1, &p_re)?;
        let cov_im = projected_covariance(&b2, &p_im)?;
        drop((b1, b2));
        let ambient = projected_covariance(&ou_operator(grid, lam)?, &translation_projector(&chart, lam)?)?;
        let geometry = SectorGeometry::new(&chart, &ambient)?;
        Ok(Self {
            chart,
            cov_re,
            cov_im,
            ambient,
            geometry,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.chart.soliton.grid()
    }

    /// Draw `count` samples in chunks and hand each chunk to `f`.
    pub fn for_each_chunk(
        &self,
        count: usize,
        chunk: usize,
        rng: &mut ChaCha8Rng,
        mut f: impl FnMut(&SectorChunk) -> Result<()>,
    ) -> Result<()> {
        let n = self.grid().n();
        let mut done = 0;
        while done < count {
            let c = chunk.min(count - done);
            let mut z1 = Mat::<f64>::zeros(n, c);
            let mut z2 = Mat::<f64>::zeros(n, c);
            for j in 0..c {
                for i in 0..n {
                    z1[(i, j)] = StandardNormal.sample(rng);
                }
                for i in 0..n {
                    z2[(i, j)] = StandardNormal.sample(rng);
                }
            }
            let re = self.cov_re.sample_batch(&z1)?;
            drop(z1);
            let im = self.cov_im.sample_batch(&z2)?;
            f(&SectorChunk { re, im })?;
            done += c;
        }
        Ok(())
    }

    /// Sample `j` of a chunk as a field in the lab frame.
    pub fn field(&self, chunk: &SectorChunk, j: usize) -> ComplexField {
        let n = self.grid().n();
        let e = Complex64::from_polar(1.0, self.chart.theta);
        let v = (0..n).map(|i| e * Complex64::new(chunk.re[(i, j)], chunk.im[(i, j)])).collect();
        ComplexField::new(*self.grid(), v).expect("finite draws")
    }
}

/// Pairings `<Re h, g_L>`, `<Im h, g_L>` of sector draws, optionally with the
/// conditional weight and the radial component `gamma t+` added.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorPairings {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub admissible_fraction: f64,
    /// Largest orthogonality residual against the projector constraints.
    pub max_orthogonality_residual: f64,
    pub norm_sq: f64,
}

pub fn sector_pairings(
    sector: &GaussianSector,
    g: &TestFunction,
    torus_l: f64,
    count: usize,
    with_weight: bool,
    seed: u64,
) -> Result<SectorPairings> {
    let grid = *sector.grid();
    let gl = g.rescaled_on_grid(&grid, torus_l);
    let dx = grid.spacing();
    let mut rng = stream_rng(seed, 0);
    let gamma = sector.geometry.gamma();
    let (ct, st) = (sector.chart.theta.cos(), sector.chart.theta.sin());
    let gamma_g = gamma.iter().zip(&gl).map(|(a, b)| a * b).sum::<f64>() * dx;
    let mut out = SectorPairings {
        re: Vec::with_capacity(count),
        im: Vec::with_capacity(count),
        weights: with_weight.then(Vec::new),
        admissible_fraction: 0.0,
        max_orthogonality_residual: 0.0,
        norm_sq: g.l2_norm_sq(),
    };
    let mut admissible = 0usize;
    let n = grid.n();
    sector.for_each_chunk(count, 500, &mut rng, |ch| {
        for j in 0..ch.re.ncols() {
            let re: Vec<f64> = (0..n).map(|i| ch.re[(i, j)]).collect();
            let im: Vec<f64> = (0..n).map(|i| ch.im[(i, j)]).collect();
            let r = crate::sampler::orthogonality_residual(&sector.cov_re, &re)
                .max(crate::sampler::orthogonality_residual(&sector.cov_im, &im));
            out.max_orthogonality_residual = out.max_orthogonality_residual.max(r);
            let pr = re.iter().zip(&gl).map(|(a, b)| a * b).sum::<f64>() * dx;
            let pi = im.iter().zip(&gl).map(|(a, b)| a * b).sum::<f64>() * dx;
            // phase frame -> lab frame
            let (mut lab_re, mut lab_im) = (ct * pr - st * pi, st * pr + ct * pi);
            if let Some(w) = out.weights.as_mut() {
                let h = sector.field(ch, j);
                let d = sector.geometry.weight(&h);
                if d.admissible {
                    admissible += 1;
                }
                lab_re += ct * d.t_plus * gamma_g;
                lab_im += st * d.t_plus * gamma_g;
                w.push(d.weight.unwrap_or(0.0));
            }
            out.re.push(lab_re);
            out.im.push(lab_im);
        }
        Ok(())
    })?;
    out.admissible_fraction = admissible as f64 / count as f64;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub torus_l: f64,
    pub n_draws: usize,
    pub k_values: Vec<f64>,
    /// `P(|h|_inf > K sqrt(log L^2))` per `K`.
    pub sup_exceedance: Vec<f64>,
    /// Fit `log P = log C - c K^2 log L^2`: `(log C, c)`.
    pub envelope: (f64, f64),
    /// Quartiles of `|h|^2 / L^2`.
    pub l2_quartiles: [f64; 3],
    pub l2_iqr: f64,
    /// `P(|h|^2/L^2 > D_thresh)`.
    pub l2_above_threshold: f64,
    pub l2_threshold: f64,
    /// `E |h_L|^2` in the weighted Besov norm, with its standard error.
    pub besov_moment: Estimate,
    pub besov_spec: NormSpec,
}

/// Tail, concentration and moment diagnostics of the normal sector.
pub fn gaussian_sector_tails(
    sector: &GaussianSector,
    torus_l: f64,
    n_draws: usize,
    k_values: &[f64],
    l2_threshold: f64,
    besov: NormSpec,
    seed: u64,
) -> Result<TailReport> {
    let grid = *sector.grid();
    let n = grid.n();
    let small = TorusGrid::lattice(n, torus_l)?;
    let mut rng = stream_rng(seed, 0);
    let log_l2 = (torus_l * torus_l).ln();
    let mut sup = Vec::with_capacity(n_draws);
    let mut l2 = Vec::with_capacity(n_draws);
    let mut bes = Vec::with_capacity(n_draws);
    let s = torus_l.sqrt();
    sector.for_each_chunk(n_draws, 500, &mut rng, |ch| {
        for j in 0..ch.re.ncols() {
            let h = sector.field(ch, j);
            sup.push(h.max_abs());
            l2.push(mass_functional(&h) / (torus_l * torus_l));
            let hl = ComplexField::new(small, h.values().iter().map(|z| z * s).collect())?;
            bes.push(weighted_norm(&hl, &besov).powi(2));
        }
        Ok(())
    })?;
    let sup_exceedance: Vec<f64> = k_values
        .iter()
        .map(|k| {
            let thr = k * log_l2.sqrt();
            sup.iter().filter(|v| **v > thr).count() as f64 / n_draws as f64
        })
        .collect();
    let pts: Vec<(f64, f64)> = k_values
        .iter()
        .zip(&sup_exceedance)
        .filter(|(_, p)| **p > 0.0)
        .map(|(k, p)| (k * k * log_l2, p.ln()))
        .collect();
    let envelope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (my - slope * mx, -slope)
    } else {
        (f64::NAN, f64::NAN)
    };
    let q = [quantile(&l2, 0.25), quantile(&l2, 0.5), quantile(&l2, 0.75)];
    let m = mean(&bes);
    let se = (bes.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (bes.len() as f64 - 1.0) / bes.len() as f64).sqrt();
    Ok(TailReport {
        torus_l,
        n_draws,
        k_values: k_values.to_vec(),
        sup_exceedance,
        envelope,
        l2_quartiles: q,
        l2_iqr: q[2] - q[0],
        l2_above_threshold: l2.iter().filter(|v| **v > l2_threshold).count() as f64 / n_draws as f64,
        l2_threshold,
        besov_moment: Estimate {
            value: m,
            stderr: se,
            ess: bes.len() as f64,
        },
        besov_spec: besov,
    })
}

/// `log P(M < r)` for the free field, by exponentially tilted sampling of
/// the mode intensities `|c_k|^2 ~ Exp(mean s_k)`.
pub fn log_ball_probability(free: &FreeField, radius: f64, draws: usize, seed: u64) -> Result<WeightedEstimate> {
    let s: Vec<f64> = (0..free.grid().n()).map(|i| free.mode_variance(i)).filter(|v| *v > 0.0).collect();
    let mean_mass: f64 = s.iter().sum();
    if !(radius > 0.0) {
        return invalid("ball radius must be positive");
    }
    // tilt so that the tilted mean mass equals the radius (no tilt if the
    // ball already contains the mean)
    let theta = if mean_mass <= radius {
        0.0
    } else {
        let f = |t: f64| s.iter().map(|v| v / (1.0 + t * v)).sum::<f64>() - radius;
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let log_norm: f64 = s.iter().map(|v| (1.0 + theta * v).ln()).sum();
    let mut rng = stream_rng(seed, 7);
    let mut lw = Vec::with_capacity(draws);
    for _ in 0..draws {
        let m: f64 = s
            .iter()
            .map(|v| {
                let e: f64 = Exp1.sample(&mut rng);
                e * v / (1.0 + theta * v)
            })
            .sum();
        lw.push(if m < radius { theta * m } else { f64::NEG_INFINITY });
    }
    let mx = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return Err(Error::Unreliable { ess: 0.0, required: 1.0 });
    }
    let w: Vec<f64> = lw.iter().map(|l| (l - mx).exp()).collect();
    let n = w.len() as f64;
    let m = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(WeightedEstimate {
        value: m.ln() + mx - log_norm,
        stderr: (var / n).sqrt() / m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyConfig {
    pub n_points: usize,
    /// Couplings in `[0, 1]`, increasing, starting at 0; either `{0}` or
    /// ending at 1.
    pub lambda_grid: Vec<f64>,
    pub n_steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub ball_draws: usize,
    pub kernel: Kernel,
    pub step_size: f64,
    pub min_ess: f64,
}

impl FreeEnergyConfig {
    pub fn new(n_points: usize, seed: u64) -> Self {
        Self {
            n_points,
            lambda_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            n_steps: 20_000,
            burn_in: 2_000,
            seed,
            ball_draws: 100_000,
            kernel: Kernel::Hmc { n_leapfrog: 8 },
            step_size: 0.15,
            min_ess: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    /// `E_lambda[1/4 int |phi|^4]`.
    pub mean_v: f64,
    pub stderr: f64,
    pub ess: f64,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub torus_l: f64,
    pub mass_d: f64,
    pub log_ball_probability: WeightedEstimate,
    pub integral: f64,
    pub integral_stderr: f64,
    pub log_z: f64,
    pub log_z_stderr: f64,
    /// `log Z_L / L^3`.
    pub density: f64,
    pub density_stderr: f64,
    pub points: Vec<LambdaPoint>,
}

/// Trapezoid weights for a sorted grid.
fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let d = x[i + 1] - x[i];
        w[i] += 0.5 * d;
        w[i + 1] += 0.5 * d;
    }
    w
}

/// Simpson weights when the grid is uniform with an odd number of points,
/// trapezoid otherwise.
fn quadrature_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n >= 3 && n % 2 == 1 {
        let d = x[1] - x[0];
        let uniform = x.windows(2).all(|w| ((w[1] - w[0]) - d).abs() < 1e-12);
        if uniform {
            return (0..n)
                .map(|i| {
                    let c = if i == 0 || i == n - 1 {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    c * d / 3.0
                })
                .collect();
        }
    }
    trapezoid_weights(x)
}

/// `log Z_L = log P_free(M < L D) + int_0^1 E_lambda[V] d lambda`, divided by `L^3`.
pub fn free_energy_estimate(torus_l: f64, mass_d: f64, cfg: &FreeEnergyConfig) -> Result<FreeEnergyReport> {
    let lg = &cfg.lambda_grid;
    if lg.is_empty() || lg[0] != 0.0 || lg.windows(2).any(|w| w[1] <= w[0]) || lg.iter().any(|l| *l > 1.0) {
        return invalid("lambda grid must be increasing in [0,1] and start at 0");
    }
    if lg.len() > 1 && *lg.last().expect("non-empty") != 1.0 {
        return invalid("lambda grid must end at 1");
    }
    let grid = TorusGrid::lattice(cfg.n_points, torus_l)?;
    let free = FreeField::new(grid, 1.0, false)?;
    let ball = log_ball_probability(&free, torus_l * mass_d, cfg.ball_draws, cfg.seed)?;
    let mut points = Vec::with_capacity(lg.len());
    if lg.len() > 1 {
        for (i, &lam) in lg.iter().enumerate() {
            let mut cc = ChainConfig::new(cfg.n_points, torus_l, mass_d, cfg.seed)?;
            cc.chain_id = i as u64 + 1;
            cc.coupling = lam;
            cc.kernel = cfg.kernel;
            cc.step_size = cfg.step_size;
            cc.n_steps = cfg.n_steps;
            cc.burn_in = cfg.burn_in;
            cc.adapt = true;
            cc.target_acceptance = match cfg.kernel {
                Kernel::Pcn => 0.3,
                Kernel::Hmc { .. } => 0.75,
            };
            cc.symmetry_moves = true;
            cc.init = crate::sampler::Init::Soliton;
            let mut vs = Vec::with_capacity((cfg.n_steps - cfg.burn_in) as usize);
            let summary = run_mcmc_chain(cc, |s| vs.push(0.25 * crate::lattice::quartic_integral(&s.field)))?;
            let e = crate::stats::mean_estimate(&vs);
            if e.ess < cfg.min_ess {
                return Err(Error::Unreliable {
                    ess: e.ess,
                    required: cfg.min_ess,
                });
            }
            points.push(LambdaPoint {
                lambda: lam,
                mean_v: e.value,
                stderr: e.stderr,
                ess: e.ess,
                acceptance: summary.acceptance_rate,
            });
        }
    }
    let w = quadrature_weights(lg);
    let integral: f64 = points.iter().zip(&w).map(|(p, w)| p.mean_v * w).sum();
    let integral_se: f64 = points.iter().zip(&w).map(|(p, w)| (p.stderr * w).powi(2)).sum::<f64>().sqrt();
    let log_z = ball.value + integral;
    let log_z_se = (ball.stderr.powi(2) + integral_se.powi(2)).sqrt();
    let l3 = torus_l.powi(3);
    Ok(FreeEnergyReport {
        torus_l,
        mass_d,
        log_ball_probability: ball,
        integral,
        integral_stderr: integral_se,
        log_z,
        log_z_stderr: log_z_se,
        density: log_z / l3,
        density_stderr: log_z_se / l3,
        points,
    })
}

/// Aggregated fluctuation statistics over an `L` sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub l_values: Vec<f64>,
    pub char_estimates_re: Vec<Option<CharEstimate>>,
    pub char_estimates_im: Vec<Option<CharEstimate>>,
    pub variance_estimates: Vec<Option<VarianceEstimate>>,
    pub target: f64,
    pub concentration_fractions: Vec<f64>,
    pub shell_occupancy: Vec<f64>,
    pub free_energy_density: Vec<Option<f64>>,
    pub metadata: serde_json::Value,
}

impl ExperimentReport {
    pub fn new(target: f64, metadata: serde_json::Value) -> Self {
        Self {
            version: REPORT_VERSION.to_string(),
            l_values: vec![],
            char_estimates_re: vec![],
            char_estimates_im: vec![],
            variance_estimates: vec![],
            target,
            concentration_fractions: vec![],
            shell_occupancy: vec![],
            free_energy_density: vec![],
            metadata,
        }
    }
}

/// Uniform random points, used to place test functions away from centres.
pub fn random_centers(count: usize, half_length: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..count).map(|_| rng.random_range(-half_length..half_length)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    #[test]
    fn bump_has_requested_norm() {
        let g = TestFunction::unit(0.3).unwrap();
        assert!((g.l2_norm_sq() - 1.0).abs() < 1e-12);
        let grid = make_grid(4096, 8.0).unwrap();
        let v = g.on_grid(&grid);
        let q: f64 = v.iter().map(|a| a * a).sum::<f64>() * grid.spacing();
        assert!((q - 1.0).abs() < 1e-9, "{q}");
    }

    #[test]
    fn rescaling_preserves_norm() {
        let g = TestFunction::unit(-2.0).unwrap();
        let l = 4.0;
        let grid = make_grid(2048, l * l).unwrap();
        let v = g.rescaled_on_grid(&grid, l);
        let q: f64 = v.iter().map(|a| a * a).sum::<f64>() * grid.spacing();
        assert!((q - 1.0).abs() < 1e-8, "{q}");
        assert!(g.rescaled_support_contains(-8.0, l));
        assert!(!g.rescaled_support_contains(0.0, l));
    }

    #[test]
    fn ball_probability_matches_direct_sampling() {
        let grid = TorusGrid::lattice(16, 2.0).unwrap();
        let free = FreeField::new(grid, 1.0, false).unwrap();
        let r = 0.5 * free.expected_mass();
        let est = log_ball_probability(&free, r, 20_000, 3).unwrap();
        let mut rng = stream_rng(9, 0);
        let n = 40_000;
        let hits = (0..n)
            .filter(|_| {
                let f = ComplexField::new(grid, free.draw(&mut rng)).unwrap();
                mass_functional(&f) < r
            })
            .count() as f64;
        let p = hits / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt() / p;
        assert!(p > 0.01, "{p}");
        let tol = 4.0 * (se * se + est.stderr * est.stderr).sqrt();
        assert!((est.value - p.ln()).abs() < tol, "{} vs {} (tol {tol})", est.value, p.ln());
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let x: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let w = quadrature_weights(&x);
        let q: f64 = x.iter().zip(&w).map(|(a, b)| a.powi(3) * b).sum();
        assert!((q - 0.25).abs() < 1e-14);
        let w = quadrature_weights(&[0.0, 0.3, 1.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn char_function_of_standard_normals() {
        let mut rng = stream_rng(1, 0);
        let v: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c = char_from_pairings(&v, None, 1.0, 1e3).unwrap();
        assert!(c.deviation() < 4.0 * c.stderr() + 1e-3, "{c:?}");
        let w = vec![1.0; v.len()];
        let cw = char_from_pairings(&v, Some(&w), 1.0, 1e3).unwrap();
        assert!((cw.re - c.re).abs() < 1e-12);
        assert!(matches!(
            char_from_pairings(&v[..50], None, 1.0, 1e3),
            Err(Error::Unreliable { .. })
        ));
        let var = variance_from_pairings(&v, 1.0, 1e3).unwrap();
        assert!((var.variance - 1.0).abs() < 4.0 * var.stderr, "{var:?}");
    }

    #[test]
    fn white_noise_variance() {
        let grid = TorusGrid::lattice(64, 4.0).unwrap();
        let mut rng = stream_rng(2, 0);
        let f = white_noise_surrogate(grid, 200, &mut rng);
        let v: f64 = f.iter().flat_map(|x| x.re()).map(|a| a * a).sum::<f64>() / (200.0 * 64.0);
        assert!((v * grid.spacing() - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn fluctuation_field_of_perturbed_soliton() {
        use crate::groundstate::{solve_reference, SolverConfig};
        use crate::manifold::CutoffSpec;
        let l = 4.0;
        let p = solve_reference(1.0, &SolverConfig::default()).unwrap();
        let big = make_grid(32, l * l).unwrap();
        let m = SolitonManifold::new(&p, l, big, CutoffSpec::large_torus(l)).unwrap();
        let small = TorusGrid::lattice(32, l).unwrap();
        let q = m.soliton(1.0, 0.4);
        let phi = ComplexField::new(small, q.values().iter().map(|z| z * l).collect()).unwrap();
        let t = fluctuation_field(&phi, &m, 0.5).unwrap().unwrap();
        assert!(t.field.max_abs() < 1e-6, "{}", t.field.max_abs());
        assert!((t.x0 - 1.0).abs() < 1e-6);
        let far = ComplexField::zeros(small);
        assert!(fluctuation_field(&far, &m, 0.05).unwrap().is_none());
    }
}
