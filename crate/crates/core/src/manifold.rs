//! The soliton manifold on the large torus: cutoff solitons, nearest-point
//! projection, normal coordinates, tangent frame, curvature determinant and
//! the decomposition of normal fields used by the Gaussian-sector pipeline.
//!
//! The discrete manifold is the orbit of one sampled, centred template
//! `q = eta(x/R) Q(x)` under exact spectral translation and phase rotation.
//! Norms, tangent lengths and the surface density are therefore exactly
//! independent of `(x0, theta)` on the grid.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::groundstate::{transfer_profile, SolitonProfile};
use crate::lattice::{
    fft_inverse, helmholtz, mass_functional, real_inner, smooth_step, spectral_derivative, ComplexField, TorusGrid,
};
use crate::schrodinger::CovarianceHandle;

/// Even cutoff, 1 on `[-1/8, 1/8]`, 0 outside `[-1/4, 1/4]`, smooth.
pub fn cutoff_eta(u: f64) -> f64 {
    let a = u.abs();
    if a <= 0.125 {
        1.0
    } else if a >= 0.25 {
        0.0
    } else {
        smooth_step((0.25 - a) / 0.125)
    }
}

/// Where the cutoff acts. `radius` is the scale `R` in `eta((x - x0)/R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub radius: f64,
}

impl CutoffSpec {
    /// Default: `R = L^2` on the large torus, so the cutoff sits at a fixed
    /// fraction of the period.
    pub fn large_torus(torus_l: f64) -> Self {
        Self { radius: torus_l * torus_l }
    }

    /// `R = L`.
    pub fn literal(torus_l: f64) -> Self {
        Self { radius: torus_l }
    }
}

#[derive(Debug, Clone)]
pub struct ManifoldChart {
    pub x0: f64,
    pub theta: f64,
    /// `e^{i theta} Q^eta(x - x0)`.
    pub soliton: ComplexField,
    /// H^1-orthonormal frame.
    pub tangent: [ComplexField; 2],
    /// Unnormalized tangents `d/dx0` and `d/dtheta` of the soliton.
    pub tangent_raw: [ComplexField; 2],
    pub density: f64,
    pub lambda: f64,
    pub torus_l: f64,
}

impl ManifoldChart {
    /// Real profile `Q^eta(x - x0)`, i.e. the soliton with the phase removed.
    pub fn real_profile(&self) -> Vec<f64> {
        self.soliton.rotate(-self.theta).re()
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub chart: Option<ManifoldChart>,
    pub h: ComplexField,
    pub distance: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct NormalDecomposition {
    pub t: f64,
    pub gamma: ComplexField,
    pub h_perp: ComplexField,
    pub sigma: f64,
    /// `(|gamma|_1, |gamma|_2, |gamma|_inf)`.
    pub gamma_norms: (f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDiagnostics {
    pub t_plus: f64,
    pub admissible: bool,
    pub c0: Option<f64>,
    pub b: Option<f64>,
    pub g_coeff: f64,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerms {
    pub cubic: f64,
    pub quartic: f64,
    pub total: f64,
}

/// The approximate soliton manifold for one profile on one grid.
#[derive(Debug, Clone)]
pub struct SolitonManifold {
    grid: TorusGrid,
    torus_l: f64,
    cutoff: CutoffSpec,
    lambda: f64,
    mass_d: f64,
    template: ComplexField,
    template_hat: Vec<Complex64>,
    norm_sq: f64,
}

impl SolitonManifold {
    pub fn new(profile: &SolitonProfile, torus_l: f64, grid: TorusGrid, cutoff: CutoffSpec) -> Result<Self> {
        if !(torus_l > 0.0) {
            return invalid(format!("L must be positive, got {torus_l}"));
        }
        if !(cutoff.radius > 0.0) {
            return invalid("cutoff radius must be positive");
        }
        let width = profile.width();
        if grid.spacing() > 0.5 * width * (1.0 + 1e-6) {
            return invalid(format!(
                "grid spacing {} does not resolve the soliton width {width}",
                grid.spacing()
            ));
        }
        let q = transfer_profile(profile, &grid);
        let vals: Vec<Complex64> = (0..grid.n())
            .map(|j| Complex64::new(q[j] * cutoff_eta(grid.x(j) / cutoff.radius), 0.0))
            .collect();
        let mut spec = ComplexField::new(grid, vals)?.spectrum();
        if grid.n() % 2 == 0 {
            spec[grid.n() / 2] = Complex64::new(0.0, 0.0);
        }
        let template = ComplexField::from_spectrum(grid, spec.clone()).map(|z| Complex64::new(z.re, 0.0));
        let template_hat = template.spectrum();
        let norm_sq = mass_functional(&template);
        Ok(Self {
            grid,
            torus_l,
            cutoff,
            lambda: profile.multiplier_lambda,
            mass_d: profile.mass_d,
            template,
            template_hat,
            norm_sq,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn torus_l(&self) -> f64 {
        self.torus_l
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mass_d(&self) -> f64 {
        self.mass_d
    }

    pub fn cutoff(&self) -> CutoffSpec {
        self.cutoff
    }

    pub fn width(&self) -> f64 {
        1.0 / self.lambda.sqrt()
    }

    pub fn template(&self) -> &ComplexField {
        &self.template
    }

    /// `|Q^eta|^2_{L^2}`, the same at every point of the manifold.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    fn shifted(&self, x0: f64, mult: impl Fn(f64) -> Complex64) -> ComplexField {
        let spec: Vec<Complex64> = self
            .template_hat
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let k = self.grid.wavenumber(i);
                s * mult(k) * Complex64::from_polar(1.0, -k * x0)
            })
            .collect();
        ComplexField::from_spectrum(self.grid, spec)
    }

    /// `e^{i theta} Q^eta(x - x0)`.
    pub fn soliton(&self, x0: f64, theta: f64) -> ComplexField {
        let one = Complex64::new(1.0, 0.0);
        let r = self.shifted(x0, |_| one);
        let e = Complex64::from_polar(1.0, theta);
        r.map(|z| Complex64::new(z.re, 0.0) * e)
    }

    /// Raw tangents `(d/dx0, d/dtheta)` of the soliton at `(x0, theta)`.
    pub fn tangents(&self, x0: f64, theta: f64) -> [ComplexField; 2] {
        let s = self.soliton(x0, theta);
        let t1 = spectral_derivative(&s, 1).scale(-1.0);
        let t2 = s.map(|z| z * Complex64::new(0.0, 1.0));
        [t1, t2]
    }

    pub fn chart(&self, x0: f64, theta: f64) -> Result<ManifoldChart> {
        let x0 = self.grid.wrap(x0);
        let theta = theta.rem_euclid(2.0 * PI);
        let (tangent, tangent_raw, density) = self.frame(x0, theta)?;
        Ok(ManifoldChart {
            x0,
            theta,
            soliton: self.soliton(x0, theta),
            tangent,
            tangent_raw,
            density,
            lambda: self.lambda,
            torus_l: self.torus_l,
        })
    }

    fn frame(&self, x0: f64, theta: f64) -> Result<([ComplexField; 2], [ComplexField; 2], f64)> {
        let raw = self.tangents(x0, theta);
        let h1 = |u: &ComplexField, v: &ComplexField| h1_inner(u, v);
        let n1 = h1(&raw[0], &raw[0])?.sqrt();
        if !(n1 > 1e-300) {
            return Err(Error::DegenerateChart("vanishing translation tangent".into()));
        }
        let t1 = raw[0].scale(1.0 / n1);
        let c = h1(&raw[1], &t1)?;
        let r2 = raw[1].axpy(Complex64::new(-c, 0.0), &t1)?;
        let n2 = h1(&r2, &r2)?.sqrt();
        let n2_raw = h1(&raw[1], &raw[1])?.sqrt();
        if !(n2 > 1e-12 * n2_raw) {
            return Err(Error::DegenerateChart("tangent vectors are linearly dependent".into()));
        }
        let t2 = r2.scale(1.0 / n2);
        let m = [
            [h1(&raw[0], &t1)?, h1(&raw[1], &t1)?],
            [h1(&raw[0], &t2)?, h1(&raw[1], &t2)?],
        ];
        let density = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs();
        Ok(([t1, t2], raw, density))
    }

    /// Complex correlation `c(x0) = <psi, S_{x0} p>` and its first two
    /// derivatives in `x0`, where `p_hat = mult(k) q_hat`.
    fn correlation(&self, psi_hat: &[Complex64], x0: f64, mult: &dyn Fn(f64) -> f64) -> [Complex64; 3] {
        let n = self.grid.n() as f64;
        let w = self.grid.spacing() / n;
        let mut c = [Complex64::new(0.0, 0.0); 3];
        for (i, (a, q)) in psi_hat.iter().zip(&self.template_hat).enumerate() {
            let k = self.grid.wavenumber(i);
            let t = a * q.conj() * mult(k) * Complex64::from_polar(1.0, k * x0);
            c[0] += t;
            c[1] += t * Complex64::new(0.0, k);
            c[2] += t * (-k * k);
        }
        [c[0] * w, c[1] * w, c[2] * w]
    }

    /// `|c|` on a fine periodic grid of shifts, stride `h / pad`.
    fn correlation_scan(&self, psi_hat: &[Complex64], pad: usize) -> Vec<f64> {
        let n = self.grid.n();
        let m = n * pad;
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (i, (a, q)) in psi_hat.iter().zip(&self.template_hat).enumerate() {
            let mode = self.grid.mode(i);
            let slot = mode.rem_euclid(m as i64) as usize;
            buf[slot] = a * q.conj();
        }
        fft_inverse(&mut buf);
        let w = self.grid.spacing() / n as f64 * m as f64;
        buf.iter().map(|z| z.norm() * w).collect()
    }

    /// Newton iteration for a local maximum of `|c(x0)|^2`.
    fn polish(&self, psi_hat: &[Complex64], x_start: f64, mult: &dyn Fn(f64) -> f64) -> (f64, bool) {
        let h = self.grid.spacing();
        let mut x = x_start;
        for _ in 0..60 {
            let [c, c1, c2] = self.correlation(psi_hat, x, mult);
            let f1 = 2.0 * (c.conj() * c1).re;
            let f2 = 2.0 * (c1.norm_sqr() + (c.conj() * c2).re);
            let step = if f2 < 0.0 {
                (-f1 / f2).clamp(-h, h)
            } else {
                (f1.signum() * 0.25 * h).clamp(-h, h)
            };
            x += step;
            if step.abs() <= 1e-13 * (1.0 + x.abs()) {
                return (self.grid.wrap(x), true);
            }
        }
        (self.grid.wrap(x), false)
    }

    /// Nearest point on the manifold in `L^2`.
    ///
    /// Coarse scan of `|<psi, S_x0 q>|` at stride `h/4`, closed-form phase,
    /// Newton polish. Returns a chart only if the distance is below `delta`.
    pub fn project(&self, field: &ComplexField, delta: f64) -> Result<ProjectionResult> {
        if field.grid().n() != self.grid.n() {
            return invalid("field and manifold live on different grids");
        }
        let psi_hat = field.spectrum();
        let pad = 4;
        let scan = self.correlation_scan(&psi_hat, pad);
        let m = scan.len();
        let stride = self.grid.spacing() / pad as f64;
        let mut peaks: Vec<(f64, usize)> = (0..m)
            .filter(|&i| scan[i] >= scan[(i + m - 1) % m] && scan[i] > scan[(i + 1) % m])
            .map(|i| (scan[i], i))
            .collect();
        peaks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let psi_sq = mass_functional(field);
        let one = |_: f64| 1.0;
        let top = peaks.first().map(|p| p.0).unwrap_or(0.0);
        let mut cands: Vec<(f64, f64, f64, bool)> = Vec::new();
        for &(v, i) in peaks.iter().take(6) {
            if v < 0.5 * top {
                break;
            }
            let (x, ok) = self.polish(&psi_hat, self.grid.wrap(i as f64 * stride), &one);
            if cands.iter().any(|c| self.grid.periodic_distance(c.0, x) < 0.25 * self.width()) {
                continue;
            }
            let c = self.correlation(&psi_hat, x, &one)[0];
            let d = (psi_sq + self.norm_sq - 2.0 * c.norm()).max(0.0).sqrt();
            cands.push((x, c.arg().rem_euclid(2.0 * PI), d, ok));
        }
        if cands.is_empty() {
            return Ok(ProjectionResult {
                chart: None,
                h: field.clone(),
                distance: (psi_sq + self.norm_sq).sqrt(),
                converged: true,
            });
        }
        cands.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
        let best = cands[0];
        if best.2 >= delta {
            return Ok(ProjectionResult {
                chart: None,
                h: field.clone(),
                distance: best.2,
                converged: best.3,
            });
        }
        if let Some(second) = cands.get(1) {
            if (second.2 - best.2).abs() <= 1e-10 * best.2.max(1.0) {
                let (a, b) = if best.0 <= second.0 { (best, *second) } else { (*second, best) };
                return Err(Error::AmbiguousProjection {
                    x0_a: a.0,
                    theta_a: a.1,
                    x0_b: b.0,
                    theta_b: b.1,
                });
            }
        }
        let chart = self.chart(best.0, best.1)?;
        let h = field.sub(&chart.soliton)?;
        Ok(ProjectionResult {
            chart: Some(chart),
            h,
            distance: best.2,
            converged: best.3,
        })
    }

    /// Orthogonal coordinates `field = e^{i theta} Q^eta_{x0} + h` with `h`
    /// orthogonal to both tangents in the `(1 - d^2)`-weighted pairing.
    pub fn normal_coordinates(&self, field: &ComplexField, delta: f64) -> Result<(ManifoldChart, ComplexField)> {
        let p = self.project(field, delta)?;
        let Some(c0) = p.chart else {
            return Err(Error::OutOfTube {
                distance: p.distance,
                delta,
            });
        };
        let psi_hat = field.spectrum();
        let w = |k: f64| 1.0 + k * k;
        let (x, _) = self.polish(&psi_hat, c0.x0, &w);
        let c = self.correlation(&psi_hat, x, &w)[0];
        let chart = self.chart(x, c.arg())?;
        let h = field.sub(&chart.soliton)?;
        Ok((chart, h))
    }

    /// Curvature determinant `det(Id - W)` at the chart for a normal field
    /// `h`. The normal parametrization is the transport `N_{x0+a, theta+s}(h)
    /// = e^{is} h(. - a)`, differentiated by symmetric differences with step
    /// `fd_step` (default `1e-4` soliton widths).
    pub fn weingarten_det(&self, chart: &ManifoldChart, h: &ComplexField, fd_step: Option<f64>) -> Result<f64> {
        let eps = fd_step.unwrap_or(1e-4 * self.width());
        if !(eps > 1e-12 * self.width()) || !eps.is_finite() {
            return invalid(format!("finite-difference step {eps:e} too small"));
        }
        let d_theta = h.map(|z| z * Complex64::new(0.0, eps.sin() / eps));
        let d_x0 = h.translate(eps).sub(&h.translate(-eps))?.scale(0.5 / eps);
        let [tx, tt] = &chart.tangent_raw;
        let m00 = -h1_inner(&d_theta, tx)?;
        let m01 = -h1_inner(&d_theta, tt)?;
        let m10 = -h1_inner(&d_x0, tx)?;
        let m11 = -h1_inner(&d_x0, tt)?;
        Ok((1.0 - m00) * (1.0 - m11) - m01 * m10)
    }

    /// `Det_L(h) = det(Id - W_{L^{-3/2} h})`.
    pub fn rescaled_det(&self, chart: &ManifoldChart, h: &ComplexField) -> Result<f64> {
        self.weingarten_det(chart, &h.scale(self.torus_l.powf(-1.5)), None)
    }
}

/// `<u, (1 - d^2) v>`.
pub fn h1_inner(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    real_inner(u, &helmholtz(v, 1.0))
}

/// `e^{i theta} eta((x - x0)/R) Q(x - x0)` on the given grid.
pub fn approximate_soliton(
    profile: &SolitonProfile,
    torus_l: f64,
    x0: f64,
    theta: f64,
    grid: TorusGrid,
    cutoff: CutoffSpec,
) -> Result<ComplexField> {
    Ok(SolitonManifold::new(profile, torus_l, grid, cutoff)?.soliton(x0, theta))
}

pub fn project_manifold(field: &ComplexField, manifold: &SolitonManifold, delta: f64) -> Result<ProjectionResult> {
    manifold.project(field, delta)
}

pub fn normal_coordinates(
    field: &ComplexField,
    manifold: &SolitonManifold,
    delta: f64,
) -> Result<(ManifoldChart, ComplexField)> {
    manifold.normal_coordinates(field, delta)
}

/// Frame and surface density at `(x0, theta)`.
pub fn tangent_frame_and_density(
    manifold: &SolitonManifold,
    x0: f64,
    theta: f64,
) -> Result<(ComplexField, ComplexField, f64)> {
    let c = manifold.chart(x0, theta)?;
    let [t1, t2] = c.tangent;
    Ok((t1, t2, c.density))
}

/// Chart data shared by all normal fields decomposed against one chart:
/// `gamma = C1 Q / <C1 Q, Q>` and the integrals entering the conditional
/// weight.
#[derive(Debug, Clone)]
pub struct SectorGeometry {
    q: Vec<f64>,
    gamma: Vec<f64>,
    sigma_sq: f64,
    theta: f64,
    torus_l: f64,
    dx: f64,
    gamma_sq: f64,
    qg_sq: f64,
    gamma_norms: (f64, f64, f64),
}

impl SectorGeometry {
    /// `cov` is the covariance of the real part of the ambient Gaussian field.
    pub fn new(chart: &ManifoldChart, cov: &CovarianceHandle) -> Result<Self> {
        let q = chart.real_profile();
        let c1q = cov.apply(&q)?;
        let dx = chart.soliton.grid().spacing();
        let sigma_sq: f64 = c1q.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() * dx;
        if !(sigma_sq > 0.0) {
            return Err(Error::DegenerateProfile("<C1 Q, Q> is not positive".into()));
        }
        let gamma: Vec<f64> = c1q.iter().map(|v| v / sigma_sq).collect();
        let gamma_sq = gamma.iter().map(|g| g * g).sum::<f64>() * dx;
        let qg_sq = q.iter().zip(&gamma).map(|(q, g)| (q * g).powi(2)).sum::<f64>() * dx;
        let l1 = gamma.iter().map(|g| g.abs()).sum::<f64>() * dx;
        let linf = gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        Ok(Self {
            q,
            gamma,
            sigma_sq,
            theta: chart.theta,
            torus_l: chart.torus_l,
            dx,
            gamma_sq,
            qg_sq,
            gamma_norms: (l1, gamma_sq.sqrt(), linf),
        })
    }

    /// `gamma` in the chart's phase frame (real).
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }

    pub fn decompose(&self, h: &ComplexField) -> Result<NormalDecomposition> {
        if h.grid().n() != self.q.len() {
            return invalid("normal field lives on a different grid");
        }
        let h_rot = h.rotate(-self.theta);
        let t: f64 = h_rot.values().iter().zip(&self.q).map(|(z, a)| z.re * a).sum::<f64>() * self.dx;
        let e = Complex64::from_polar(1.0, self.theta);
        let h_perp: Vec<Complex64> = h_rot
            .values()
            .iter()
            .zip(&self.gamma)
            .map(|(z, g)| e * (z - Complex64::new(g * t, 0.0)))
            .collect();
        let gamma_field = ComplexField::new(*h.grid(), self.gamma.iter().map(|&g| e * g).collect())?;
        Ok(NormalDecomposition {
            t,
            gamma: gamma_field,
            h_perp: ComplexField::new(*h.grid(), h_perp)?,
            sigma: self.sigma(),
            gamma_norms: self.gamma_norms,
        })
    }

    /// `t+`, `c0`, `b` and the weight `e^{c0 t+^2 + b t+}` for a field
    /// `h_perp` with `<Q, Re h_perp> = 0`.
    pub fn weight(&self, h_perp: &ComplexField) -> ConditionalDiagnostics {
        let hp = h_perp.rotate(-self.theta).re();
        let g_coeff: f64 = hp.iter().zip(&self.gamma).map(|(a, b)| a * b).sum::<f64>() * self.dx;
        let hp_sq = mass_functional(h_perp);
        let mut d = tplus_solve(hp_sq, g_coeff, self.gamma_sq, self.torus_l);
        let b: f64 = 3.0
            * self
                .q
                .iter()
                .zip(&self.gamma)
                .zip(&hp)
                .map(|((q, g), h)| q * q * g * h)
                .sum::<f64>()
            * self.dx;
        let c0 = 1.5 * self.qg_sq - 0.5 / self.sigma_sq;
        d.b = Some(b);
        d.c0 = Some(c0);
        d.weight = Some((c0 * d.t_plus * d.t_plus + b * d.t_plus).exp());
        d
    }
}

/// Split `h = gamma t + h_perp` with `t = <Q, Re h>` (in the chart's phase
/// frame) and `gamma = C1 Q / <C1 Q, Q>`, so that `<Q, Re h_perp> = 0`.
/// `cov` is the covariance of the real part of the ambient Gaussian field.
pub fn decompose_normal_field(
    h: &ComplexField,
    chart: &ManifoldChart,
    cov: &CovarianceHandle,
) -> Result<NormalDecomposition> {
    SectorGeometry::new(chart, cov)?.decompose(h)
}

/// `L^3 E = L^{-3/2} int Q |h|^2 Re h + L^{-3} int |h|^4`, with `Q Re h`
/// read as `Re(conj(Q) h)` so the formula is phase covariant.
pub fn error_functional(q_field: &ComplexField, h: &ComplexField, torus_l: f64) -> Result<ErrorTerms> {
    if q_field.grid().n() != h.grid().n() {
        return invalid("fields live on different grids");
    }
    let dx = h.grid().spacing();
    let mut cubic = 0.0;
    let mut quartic = 0.0;
    for (q, z) in q_field.values().iter().zip(h.values()) {
        let m = z.norm_sqr();
        cubic += m * (q.conj() * z).re;
        quartic += m * m;
    }
    let cubic = cubic * dx * torus_l.powf(-1.5);
    let quartic = quartic * dx * torus_l.powi(-3);
    Ok(ErrorTerms {
        cubic,
        quartic,
        total: cubic + quartic,
    })
}

/// Root `t+` of `G1(t) = 1/2 |gamma|^2 t^2 + (L^{3/2} + g) t = -1/2 |h_perp|^2`
/// on the branch of size `O(L^{1/2})`. Inadmissible inputs give `t+ = 0`.
pub fn tplus_solve(norm_h_perp_sq: f64, g_coeff: f64, gamma_norm_sq: f64, torus_l: f64) -> ConditionalDiagnostics {
    let l32 = torus_l.powf(1.5);
    let b = l32 + g_coeff;
    let disc = b * b - gamma_norm_sq * norm_h_perp_sq;
    let admissible = l32 + 2.0 * g_coeff > 0.0 && b > 0.0 && disc >= 0.0 && norm_h_perp_sq >= 0.0;
    let t_plus = if admissible {
        -norm_h_perp_sq / (b + disc.sqrt())
    } else {
        0.0
    };
    ConditionalDiagnostics {
        t_plus,
        admissible,
        c0: None,
        b: None,
        g_coeff,
        weight: None,
    }
}

/// `G1(t)` as defined for [`tplus_solve`].
pub fn g1(t: f64, g_coeff: f64, gamma_norm_sq: f64, torus_l: f64) -> f64 {
    0.5 * gamma_norm_sq * t * t + (torus_l.powf(1.5) + g_coeff) * t
}

/// Full conditional weight `e^{c0 t+^2 + b t+}` for a decomposed normal field.
pub fn conditional_weight(decomp: &NormalDecomposition, chart: &ManifoldChart) -> Result<ConditionalDiagnostics> {
    let q = chart.real_profile();
    let dx = decomp.h_perp.grid().spacing();
    let gamma = decomp.gamma.rotate(-chart.theta).re();
    let sigma_sq = decomp.sigma * decomp.sigma;
    let gamma_sq = gamma.iter().map(|g| g * g).sum::<f64>() * dx;
    let geo = SectorGeometry {
        qg_sq: q.iter().zip(&gamma).map(|(q, g)| (q * g).powi(2)).sum::<f64>() * dx,
        q,
        gamma,
        sigma_sq,
        theta: chart.theta,
        torus_l: chart.torus_l,
        dx,
        gamma_sq,
        gamma_norms: decomp.gamma_norms,
    };
    Ok(geo.weight(&decomp.h_perp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::{solve_reference, SolverConfig};
    use crate::lattice::make_grid;

    fn setup(l: f64) -> SolitonManifold {
        let p = solve_reference(1.0, &SolverConfig::default()).unwrap();
        let n = (2.0 * l * l) as usize;
        let g = make_grid(n, l * l).unwrap();
        SolitonManifold::new(&p, l, g, CutoffSpec::large_torus(l)).unwrap()
    }

    #[test]
    fn eta_plateau_and_support() {
        assert_eq!(cutoff_eta(0.0), 1.0);
        assert_eq!(cutoff_eta(0.125), 1.0);
        assert_eq!(cutoff_eta(-0.25), 0.0);
        assert!(cutoff_eta(0.2) > 0.0 && cutoff_eta(0.2) < 1.0);
        assert_eq!(cutoff_eta(0.2), cutoff_eta(-0.2));
    }

    #[test]
    fn soliton_mass_and_peak() {
        let m = setup(16.0);
        let s = m.soliton(0.0, 0.0);
        assert!((mass_functional(&s) - 1.0).abs() < 1e-6);
        let j0 = m.grid().n() / 2;
        assert!((s.values()[j0].re - 2f64.sqrt() / 4.0).abs() < 1e-6);
    }

    #[test]
    fn projection_recovers_chart() {
        let m = setup(8.0);
        let f = m.soliton(3.3, 1.2);
        let p = m.project(&f, 0.2).unwrap();
        let c = p.chart.unwrap();
        assert!((c.x0 - 3.3).abs() < 1e-8, "{}", c.x0);
        assert!((c.theta - 1.2).abs() < 1e-8);
        assert!(p.h.max_abs() < 1e-8);
    }

    #[test]
    fn tplus_leading_order() {
        let l: f64 = 64.0;
        let d = tplus_solve(l * l, 0.0, 1.0, l);
        let lead = -l.sqrt() / 2.0;
        assert!((d.t_plus / lead - 1.0).abs() < 2.0 / l.sqrt());
        let r = g1(d.t_plus, 0.0, 1.0, l) + 0.5 * l * l;
        assert!(r.abs() <= 1e-10 * l * l);
        assert_eq!(tplus_solve(0.0, 0.3, 1.0, l).t_plus, 0.0);
    }
}
