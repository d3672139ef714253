//! Linearized operators `B1 = -d^2 - 3Q^2 + Lambda`, `B2 = -d^2 - Q^2 + Lambda`
//! and the free operator `-d^2 + Lambda`, their restricted inverses on the
//! normal spaces, and Green's function diagnostics.
//!
//! Operators act on real sample vectors. With grid spacing `h`, the
//! Gaussian with density `exp(-1/2 <B u, u>)` on a subspace `V` has
//! covariance `G / h`, where `G` is the matrix restricted inverse of `B` on
//! `V`. The integral kernel of the operator `G` is `G / h` as well.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fluctstats::TestFunction;
use crate::lattice::{ComplexField, TorusGrid};
use crate::linalg::{
    dot, fourier_apply, lanczos_smallest, neg_laplacian_apply, neg_laplacian_matrix, orthonormal_basis,
    projected_pcg, sym_eigen,
};
use crate::manifold::ManifoldChart;

/// Largest grid for which dense matrices are formed.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    B1,
    B2,
    OU,
}

#[derive(Debug, Clone)]
pub struct OperatorHandle {
    pub grid: TorusGrid,
    pub kind: OperatorKind,
    pub lambda: f64,
    /// Diagonal potential: `-3Q^2`, `-Q^2` or zero.
    pub potential: Vec<f64>,
    matrix: Option<Mat<f64>>,
}

impl OperatorHandle {
    pub fn new(grid: TorusGrid, kind: OperatorKind, lambda: f64, potential: Vec<f64>) -> Result<Self> {
        if potential.len() != grid.n() {
            return invalid("potential length does not match the grid");
        }
        if !lambda.is_finite() {
            return invalid("lambda must be finite");
        }
        let matrix = (grid.n() <= DENSE_LIMIT).then(|| {
            let mut m = neg_laplacian_matrix(&grid);
            for (j, v) in potential.iter().enumerate() {
                m[(j, j)] += v + lambda;
            }
            m
        });
        Ok(Self {
            grid,
            kind,
            lambda,
            potential,
            matrix,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Dense matrix, if the grid is small enough.
    pub fn matrix(&self) -> Option<&Mat<f64>> {
        self.matrix.as_ref()
    }

    /// Matrix-free application.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut w = neg_laplacian_apply(&self.grid, v);
        for ((wi, vi), p) in w.iter_mut().zip(v).zip(&self.potential) {
            *wi += (p + self.lambda) * vi;
        }
        w
    }

    /// Upper bound for the spectrum.
    pub fn spectral_bound(&self) -> f64 {
        let kmax = std::f64::consts::PI / self.grid.spacing();
        let pmax = self.potential.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        self.lambda.abs() + kmax * kmax + pmax
    }
}

pub fn ou_operator(grid: TorusGrid, lambda: f64) -> Result<OperatorHandle> {
    OperatorHandle::new(grid, OperatorKind::OU, lambda, vec![0.0; grid.n()])
}

/// `B1` and `B2` for the (real) potential field `q`.
pub fn build_operators(q: &ComplexField, lambda: f64, grid: TorusGrid) -> Result<(OperatorHandle, OperatorHandle)> {
    if q.grid().n() != grid.n() || (q.grid().half_length() - grid.half_length()).abs() > 1e-12 * grid.half_length() {
        return invalid("potential lives on a different grid");
    }
    if !(lambda > 0.0) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let q2: Vec<f64> = q.values().iter().map(|z| z.norm_sqr()).collect();
    let b1 = OperatorHandle::new(grid, OperatorKind::B1, lambda, q2.iter().map(|v| -3.0 * v).collect())?;
    let b2 = OperatorHandle::new(grid, OperatorKind::B2, lambda, q2.iter().map(|v| -v).collect())?;
    Ok((b1, b2))
}

/// `k` lowest eigenpairs, ascending, eigenvectors normalized in `L^2`.
pub fn spectrum_and_zero_modes(op: &OperatorHandle, k: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.n();
    if k > n {
        return invalid(format!("requested {k} eigenpairs of a {n}x{n} operator"));
    }
    let Some(m) = op.matrix() else {
        return invalid("dense spectrum requested above the dense grid limit");
    };
    let (vals, vecs) = sym_eigen(m)?;
    let s = 1.0 / op.grid.spacing().sqrt();
    Ok((0..k)
        .map(|j| (vals[j], (0..n).map(|i| vecs[(i, j)] * s).collect()))
        .collect())
}

/// Inner product used to define a projector direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pairing {
    L2,
    /// `<u, (a - d^2) v>`.
    Weighted(f64),
}

/// Oblique projector `P = I - U (W^T U)^{-1} W^T` (with quadrature weights).
/// Its kernel is `span(U)`, its range is `{v : <w_i, v> = 0}`.
#[derive(Debug, Clone)]
pub struct Projector {
    pub grid: TorusGrid,
    removed: Vec<Vec<f64>>,
    constraints: Vec<Vec<f64>>,
    pairings: Vec<Pairing>,
    /// `(W^T U)^{-1} W^T`, stored row-wise.
    dual: Vec<Vec<f64>>,
}

impl Projector {
    pub fn identity(grid: TorusGrid) -> Self {
        Self {
            grid,
            removed: vec![],
            constraints: vec![],
            pairings: vec![],
            dual: vec![],
        }
    }

    /// Remove each direction `e` using the given pairing, i.e. the
    /// constraint functional is `<(a - d^2) e, .>` or `<e, .>`.
    pub fn removing(grid: TorusGrid, dirs: &[(Vec<f64>, Pairing)]) -> Result<Self> {
        let h = grid.spacing();
        let mut removed = Vec::new();
        let mut constraints = Vec::new();
        let mut pairings = Vec::new();
        for (e, p) in dirs {
            if e.len() != grid.n() {
                return invalid("direction length does not match the grid");
            }
            let w = match p {
                Pairing::L2 => e.clone(),
                Pairing::Weighted(a) => fourier_apply(&grid, e, |k| a + k * k),
            };
            let nrm = dot(&w, e) * h;
            if !(nrm > 1e-14 * dot(e, e) * h) || !(nrm > 1e-300) {
                return invalid("degenerate projector direction (vanishing norm)");
            }
            removed.push(e.clone());
            constraints.push(w);
            pairings.push(*p);
        }
        let r = removed.len();
        // Gram matrix M_ij = <w_i, u_j>
        let m = Mat::from_fn(r, r, |i, j| dot(&constraints[i], &removed[j]) * h);
        let inv = invert_small(&m)?;
        let dual = (0..r)
            .map(|i| {
                let mut row = vec![0.0; grid.n()];
                for j in 0..r {
                    let c = inv[(i, j)] * h;
                    row.iter_mut().zip(&constraints[j]).for_each(|(a, b)| *a += c * b);
                }
                row
            })
            .collect();
        Ok(Self {
            grid,
            removed,
            constraints,
            pairings,
            dual,
        })
    }

    pub fn rank_removed(&self) -> usize {
        self.removed.len()
    }

    pub fn pairings(&self) -> &[Pairing] {
        &self.pairings
    }

    /// Vectors `w_i` with `range(P) = {v : <w_i, v> = 0}`.
    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    pub fn removed(&self) -> &[Vec<f64>] {
        &self.removed
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for (u, d) in self.removed.iter().zip(&self.dual) {
            let c = dot(d, v);
            out.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
        out
    }

    pub fn dense(&self) -> Mat<f64> {
        let n = self.grid.n();
        Mat::from_fn(n, n, |i, j| {
            let mut v = if i == j { 1.0 } else { 0.0 };
            for (u, d) in self.removed.iter().zip(&self.dual) {
                v -= u[i] * d[j];
            }
            v
        })
    }

    /// `max |P^2 - P|` over a set of probe vectors (exact for rank-`r`
    /// updates: probes the removed directions and their duals).
    pub fn idempotence_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let probes: Vec<&Vec<f64>> = self.removed.iter().chain(self.constraints.iter()).collect();
        for p in probes {
            let a = self.apply(p);
            let b = self.apply(&a);
            let scale = p.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs() / scale);
            }
        }
        worst
    }
}

fn invert_small(m: &Mat<f64>) -> Result<Mat<f64>> {
    let r = m.nrows();
    match r {
        0 => Ok(Mat::zeros(0, 0)),
        1 => {
            if m[(0, 0)] == 0.0 {
                return Err(Error::LinAlg("singular projector Gram matrix".into()));
            }
            Ok(Mat::from_fn(1, 1, |_, _| 1.0 / m[(0, 0)]))
        }
        2 => {
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let scale = m[(0, 0)].abs() * m[(1, 1)].abs() + m[(0, 1)].abs() * m[(1, 0)].abs();
            if !(det.abs() > 1e-14 * scale) {
                return Err(Error::LinAlg("singular projector Gram matrix".into()));
            }
            Ok(Mat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => m[(1, 1)] / det,
                (1, 1) => m[(0, 0)] / det,
                (0, 1) => -m[(0, 1)] / det,
                _ => -m[(1, 0)] / det,
            }))
        }
        _ => Err(Error::LinAlg("projector rank above 2 is not supported".into())),
    }
}

/// `P_re` removes `d_x0 Q` (weighted by `Lambda - d^2`) and `Q` (plain);
/// `P_im` removes `Q` (weighted).
pub fn normal_projectors(chart: &ManifoldChart, lambda: f64) -> Result<(Projector, Projector)> {
    let grid = *chart.soliton.grid();
    let q = chart.real_profile();
    let dq: Vec<f64> = fourier_apply_odd(&grid, &q);
    let p_re = Projector::removing(grid, &[(dq, Pairing::Weighted(lambda)), (q.clone(), Pairing::L2)])?;
    let p_im = Projector::removing(grid, &[(q, Pairing::Weighted(lambda))])?;
    Ok((p_re, p_im))
}

/// Projector used for the ambient Ornstein-Uhlenbeck field of the real
/// sector: only the weighted translation direction is removed.
pub fn translation_projector(chart: &ManifoldChart, lambda: f64) -> Result<Projector> {
    let grid = *chart.soliton.grid();
    let dq = fourier_apply_odd(&grid, &chart.real_profile());
    Projector::removing(grid, &[(dq, Pairing::Weighted(lambda))])
}

/// `d/dx0 q(x - x0) = -q'` for a real vector.
fn fourier_apply_odd(grid: &TorusGrid, q: &[f64]) -> Vec<f64> {
    let f = ComplexField::from_real(*grid, q).expect("finite profile");
    crate::lattice::spectral_derivative(&f, 1).re().iter().map(|v| -v).collect()
}

#[derive(Debug, Clone)]
pub struct CovarianceHandle {
    pub operator: OperatorHandle,
    pub projector: Projector,
    /// Euclidean-orthonormal basis of `span{w_i}`, the orthogonal complement
    /// of the range.
    basis: Vec<Vec<f64>>,
    green: Option<Mat<f64>>,
    factor: Option<Mat<f64>>,
    /// Eigenvalues of the restricted operator (dense case), ascending.
    pub restricted_spectrum: Vec<f64>,
    pub min_rayleigh: f64,
}

/// Restricted inverse of `op` on the range of `projector`.
pub fn projected_covariance(op: &OperatorHandle, projector: &Projector) -> Result<CovarianceHandle> {
    let basis = orthonormal_basis(projector.constraints());
    let floor = 1e-10 * op.lambda.abs().max(f64::MIN_POSITIVE);
    let Some(b) = op.matrix() else {
        let min = restricted_min_rayleigh_matrix_free(op, &basis)?;
        if min < floor {
            return Err(Error::PositivityViolation { rayleigh: min });
        }
        return Ok(CovarianceHandle {
            operator: op.clone(),
            projector: projector.clone(),
            basis,
            green: None,
            factor: None,
            restricted_spectrum: vec![],
            min_rayleigh: min,
        });
    };
    let n = op.n();
    let r = basis.len();
    let m = restricted_with_shift(b, &basis, 2.0 * op.spectral_bound() + 1.0);
    drop(basis.clone());
    let (vals, vecs) = sym_eigen(&m)?;
    drop(m);
    let keep = n - r;
    let min = vals[0];
    if min < floor {
        return Err(Error::PositivityViolation { rayleigh: min });
    }
    let mut scaled_inv = Mat::<f64>::zeros(n, keep);
    let mut scaled_sqrt = Mat::<f64>::zeros(n, keep);
    let mut u = Mat::<f64>::zeros(n, keep);
    for j in 0..keep {
        let a = 1.0 / vals[j];
        let s = a.sqrt();
        for i in 0..n {
            let v = vecs[(i, j)];
            u[(i, j)] = v;
            scaled_inv[(i, j)] = v * a;
            scaled_sqrt[(i, j)] = v * s;
        }
    }
    drop(vecs);
    let green = &scaled_inv * u.transpose();
    drop(scaled_inv);
    let factor = &scaled_sqrt * u.transpose();
    Ok(CovarianceHandle {
        operator: op.clone(),
        projector: projector.clone(),
        basis,
        green: Some(green),
        factor: Some(factor),
        restricted_spectrum: vals[..keep].to_vec(),
        min_rayleigh: min,
    })
}

/// `Pi B Pi + c (I - Pi)` with `Pi = I - E E^T`, formed with rank-`r` updates.
fn restricted_with_shift(b: &Mat<f64>, basis: &[Vec<f64>], c: f64) -> Mat<f64> {
    let n = b.nrows();
    let r = basis.len();
    let e = Mat::from_fn(n, r, |i, j| basis[j][i]);
    let be = b * &e; // n x r
    let ebe = e.transpose() * &be; // r x r
    let mut m = b.clone();
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..r {
                v -= e[(i, k)] * be[(j, k)] + be[(i, k)] * e[(j, k)];
                for l in 0..r {
                    v += e[(i, k)] * ebe[(k, l)] * e[(j, l)];
                }
                v += c * e[(i, k)] * e[(j, k)];
            }
            m[(i, j)] += v;
        }
    }
    m
}

/// Lowest Rayleigh quotient of `op` on `span(basis)^perp` by Lanczos.
pub fn restricted_min_rayleigh_matrix_free(op: &OperatorHandle, basis: &[Vec<f64>]) -> Result<f64> {
    let (v, _) = lanczos_smallest(op.n(), |x| op.apply(x), basis, 600, 1e-9, 0x5eed)?;
    Ok(v)
}

/// Lowest Rayleigh quotient of `op` on the range of `projector`, dense when
/// the grid allows and matrix-free otherwise.
pub fn restricted_min_rayleigh(op: &OperatorHandle, projector: &Projector) -> Result<f64> {
    let basis = orthonormal_basis(projector.constraints());
    match op.matrix() {
        Some(b) => {
            let m = restricted_with_shift(b, &basis, 2.0 * op.spectral_bound() + 1.0);
            Ok(crate::linalg::sym_eigenvalues(&m)?[0])
        }
        None => restricted_min_rayleigh_matrix_free(op, &basis),
    }
}

impl CovarianceHandle {
    pub fn grid(&self) -> &TorusGrid {
        &self.operator.grid
    }

    pub fn is_dense(&self) -> bool {
        self.green.is_some()
    }

    /// Matrix `G` acting on sample vectors.
    pub fn green_matrix(&self) -> Option<&Mat<f64>> {
        self.green.as_ref()
    }

    /// Symmetric square root of `G`.
    pub fn factor_matrix(&self) -> Option<&Mat<f64>> {
        self.factor.as_ref()
    }

    /// Integral kernel `G(x_i, x_j)`.
    pub fn kernel(&self, i: usize, j: usize) -> Option<f64> {
        self.green.as_ref().map(|g| g[(i, j)] / self.grid().spacing())
    }

    /// `G f` for a real sample vector `f`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.operator.n() {
            return invalid("vector length does not match the grid");
        }
        if let Some(g) = &self.green {
            let n = f.len();
            return Ok((0..n).map(|i| (0..n).map(|j| g[(i, j)] * f[j]).sum()).collect());
        }
        let lam = self.operator.lambda.max(1e-12);
        let grid = self.operator.grid;
        projected_pcg(
            |x| self.operator.apply(x),
            |r| fourier_apply(&grid, r, |k| 1.0 / (lam + k * k)),
            f,
            &self.basis,
            1e-12,
            20_000,
        )
    }

    /// `<G f, f>` with the quadrature weight.
    pub fn pairing(&self, f: &[f64]) -> Result<f64> {
        let gf = self.apply(f)?;
        Ok(dot(&gf, f) * self.grid().spacing())
    }

    /// Gaussian sample `F z / sqrt(h)` for a standard normal vector `z`.
    pub fn sample_from_normals(&self, z: &[f64]) -> Result<Vec<f64>> {
        let f = self
            .factor
            .as_ref()
            .ok_or(Error::PositivityViolation { rayleigh: f64::NAN })?;
        let n = z.len();
        let s = 1.0 / self.grid().spacing().sqrt();
        Ok((0..n).map(|i| (0..n).map(|j| f[(i, j)] * z[j]).sum::<f64>() * s).collect())
    }

    /// Batched samples: columns of `F Z / sqrt(h)`.
    pub fn sample_batch(&self, z: &Mat<f64>) -> Result<Mat<f64>> {
        let f = self
            .factor
            .as_ref()
            .ok_or(Error::PositivityViolation { rayleigh: f64::NAN })?;
        let s = 1.0 / self.grid().spacing().sqrt();
        let mut out = f * z;
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] *= s;
            }
        }
        Ok(out)
    }

    /// `max |F F - G|`.
    pub fn factor_defect(&self) -> Option<f64> {
        let (f, g) = (self.factor.as_ref()?, self.green.as_ref()?);
        let ff = f * f;
        let n = g.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((ff[(i, j)] - g[(i, j)]).abs());
            }
        }
        Some(worst)
    }

    /// Sum of the covariance diagonal, `trace(G)/h`, i.e. `E sum_j u_j^2`.
    pub fn trace(&self) -> Option<f64> {
        let g = self.green.as_ref()?;
        Some((0..g.nrows()).map(|i| g[(i, i)]).sum::<f64>() / self.grid().spacing())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Decay rate `a` from `|G(x0 + r, x0)| ~ C r^b e^{-a r}`.
    pub rate: f64,
    /// Slope of a bare exponential fit over the same window.
    pub rate_pure_exponential: f64,
    pub lipschitz: f64,
    /// `max |G - G_OU + G_OU V G|` for `B = OU + V`.
    pub resolvent_residual: f64,
    /// Same with the opposite sign of the correction term.
    pub resolvent_residual_opposite: f64,
    pub max_abs_green: f64,
    pub fit_points: usize,
    pub fit_window: (f64, f64),
}

/// Decay rate, Lipschitz modulus and resolvent-identity residual.
pub fn green_diagnostics(cov: &CovarianceHandle, x0: f64) -> Result<DecayReport> {
    let g = cov
        .green_matrix()
        .ok_or_else(|| Error::InvalidArgument("green diagnostics need a dense covariance".into()))?;
    let grid = *cov.grid();
    let n = grid.n();
    let h = grid.spacing();
    let lam = cov.operator.lambda;
    let ou = ou_operator(grid, lam)?;
    let cov_ou = projected_covariance(&ou, &cov.projector)?;
    let g_ou = cov_ou.green_matrix().expect("dense");
    // The spectral inverse of -d^2 + Lambda has an alternating algebraic
    // aliasing tail. Its envelope is the gap between the discrete free
    // kernel and the periodic continuum kernel.
    let tail: Vec<f64> = {
        let free = projected_covariance(&ou, &Projector::identity(grid))?;
        let gf = free.green_matrix().expect("dense");
        let a = lam.sqrt();
        let ell = grid.half_length();
        let exact = |r: f64| (a * (ell - r)).cosh() / (2.0 * a * (a * ell).sinh());
        let dev: Vec<f64> = (0..n)
            .map(|i| (gf[(i, 0)] / h - exact(grid.periodic_distance(grid.x(i), grid.x(0)))).abs())
            .collect();
        (0..n)
            .map(|i| dev[(i + n - 1) % n].max(dev[i]).max(dev[(i + 1) % n]))
            .collect()
    };
    let max_abs = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .fold(0.0f64, |m, (i, j)| m.max(g[(i, j)].abs()));

    // resolvent identity G = G_ou - G_ou V G
    let vg = Mat::from_fn(n, n, |i, j| cov.operator.potential[i] * g[(i, j)]);
    let corr = g_ou * &vg;
    drop(vg);
    let mut res = 0.0f64;
    let mut res_opp = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let d = g[(i, j)] - g_ou[(i, j)];
            res = res.max((d + corr[(i, j)]).abs());
            res_opp = res_opp.max((d - corr[(i, j)]).abs());
        }
    }

    // decay fit on the column through x0
    let j0 = ((grid.wrap(x0) + grid.half_length()) / h).round() as usize % n;
    let col_max = (0..n).fold(0.0f64, |m, i| m.max(g[(i, j0)].abs())) / h;
    let cut = 1e-10 * col_max;
    let lo = 3.0 / lam.sqrt();
    let hi = grid.half_length() - 3.0 / lam.sqrt();
    let pts: Vec<(f64, f64)> = (0..n)
        .filter_map(|i| {
            let r = grid.periodic_distance(grid.x(i), grid.x(j0));
            let v = g[(i, j0)].abs() / h;
            let k = (i + n - j0) % n;
            (r >= lo && r <= hi && v > cut && v > 100.0 * tail[k]).then(|| (r, v.ln()))
        })
        .collect();
    let rate_pure_exponential = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / m, sy / m);
        let (sxy, sxx) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2)));
        -sxy / sxx
    } else {
        f64::NAN
    };
    // The projected kernel carries r e^{-a r} pieces, so fit
    // ln|G| = c + b ln r - a r rather than a bare exponential.
    let rate = if pts.len() >= 3 {
        let a = Mat::from_fn(pts.len(), 3, |i, j| match j {
            0 => 1.0,
            1 => pts[i].0.ln(),
            _ => -pts[i].0,
        });
        let y = Mat::from_fn(pts.len(), 1, |i, _| pts[i].1);
        let coef = faer::linalg::solvers::SolveLstsq::solve_lstsq(&a.qr(), &y);
        coef[(2, 0)]
    } else {
        rate_pure_exponential
    };

    // Lipschitz modulus of the kernel in its second argument
    let mut lip = 0.0f64;
    for j in 0..n {
        let jn = (j + 1) % n;
        for i in 0..n {
            lip = lip.max((g[(i, j)] - g[(i, jn)]).abs());
        }
    }
    let lipschitz = lip / h / h;

    Ok(DecayReport {
        rate,
        rate_pure_exponential,
        lipschitz,
        resolvent_residual: res,
        resolvent_residual_opposite: res_opp,
        max_abs_green: max_abs,
        fit_points: pts.len(),
        fit_window: (lo, hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub value: f64,
    pub norm_sq: f64,
    /// Support of the rescaled test function contains the soliton centre.
    pub overlaps_center: bool,
}

/// `<G g_L, g_L>` with `g_L(x) = L^{-1/2} g(x/L)` on the large torus.
pub fn variance_pairing(cov: &CovarianceHandle, g: &TestFunction, torus_l: f64, x0: f64) -> Result<PairingResult> {
    let grid = *cov.grid();
    let gl = g.rescaled_on_grid(&grid, torus_l);
    let value = cov.pairing(&gl)?;
    let overlaps = g.rescaled_support_contains(x0, torus_l);
    if overlaps {
        log::warn!("test function support contains the soliton centre; the white-noise limit is not expected");
    }
    Ok(PairingResult {
        value,
        norm_sq: g.l2_norm_sq(),
        overlaps_center: overlaps,
    })
}
