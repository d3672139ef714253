//! Dense and matrix-free linear algebra used by the operator code.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{fft_forward, fft_inverse, TorusGrid};

/// Eigenvalues (ascending) and eigenvectors (columns, Euclidean-normalized)
/// of a symmetric matrix. Only the lower triangle is read.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinAlg(format!("symmetric eigensolver failed: {e:?}")))?;
    let vals: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn sym_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinAlg(format!("symmetric eigensolver failed: {e:?}")))
}

/// Dense matrix of `-d^2` in the spectral collocation basis.
pub fn neg_laplacian_matrix(grid: &TorusGrid) -> Mat<f64> {
    let n = grid.n();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[0] = Complex64::new(1.0, 0.0);
    fft_forward(&mut buf);
    for (i, b) in buf.iter_mut().enumerate() {
        *b *= grid.wavenumber(i).powi(2);
    }
    fft_inverse(&mut buf);
    // circulant: entry (j, m) depends on (j - m) mod n only
    let c: Vec<f64> = buf.iter().map(|z| z.re).collect();
    Mat::from_fn(n, n, |j, m| c[(j + n - m) % n])
}

/// Apply `-d^2` spectrally to a real vector.
pub fn neg_laplacian_apply(grid: &TorusGrid, v: &[f64]) -> Vec<f64> {
    fourier_apply(grid, v, |k| k * k)
}

/// Apply a real even Fourier multiplier to a real vector.
pub fn fourier_apply(grid: &TorusGrid, v: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    for (i, b) in buf.iter_mut().enumerate() {
        *b *= m(grid.wavenumber(i));
    }
    fft_inverse(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean-orthonormal basis of `span(ws)` by modified Gram-Schmidt,
/// applied twice for stability. Near-dependent vectors are dropped.
pub fn orthonormal_basis(ws: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for w in ws {
        let mut v = w.clone();
        let n0 = norm(&v);
        for _ in 0..2 {
            for e in &basis {
                let c = dot(&v, e);
                v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nv = norm(&v);
        if nv > 1e-12 * n0.max(f64::MIN_POSITIVE) {
            v.iter_mut().for_each(|a| *a /= nv);
            basis.push(v);
        }
    }
    basis
}

/// Remove the components along an orthonormal set.
pub fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for e in basis {
        let c = dot(v, e);
        v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
    }
}

/// Dense Euclidean projector onto the orthogonal complement of an
/// orthonormal set.
pub fn complement_projector(n: usize, basis: &[Vec<f64>]) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| {
        let mut v = if i == j { 1.0 } else { 0.0 };
        for e in basis {
            v -= e[i] * e[j];
        }
        v
    })
}

/// Smallest eigenvalue of a symmetric operator restricted to the orthogonal
/// complement of `basis`, by Lanczos with full reorthogonalization.
/// Returns the lowest Ritz value and its vector.
pub fn lanczos_smallest(
    n: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    basis: &[Vec<f64>],
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    project_out(&mut q, basis);
    let nq = norm(&q);
    q.iter_mut().for_each(|a| *a /= nq);
    let mut qs: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = f64::INFINITY;
    let m = max_iter.min(n.saturating_sub(basis.len())).max(1);
    let mut best = (f64::INFINITY, Vec::new());
    for it in 0..m {
        let mut w = apply(&qs[it]);
        project_out(&mut w, basis);
        let a = dot(&w, &qs[it]);
        alpha.push(a);
        for _ in 0..2 {
            for qq in &qs {
                let c = dot(&w, qq);
                w.iter_mut().zip(qq).for_each(|(x, y)| *x -= c * y);
            }
            project_out(&mut w, basis);
        }
        let b = norm(&w);
        let k = alpha.len();
        if k % 10 == 0 || b < 1e-14 || it + 1 == m {
            let t = Mat::from_fn(k, k, |i, j| {
                if i == j {
                    alpha[i]
                } else if i == j + 1 {
                    beta[j]
                } else if j == i + 1 {
                    beta[i]
                } else {
                    0.0
                }
            });
            let (vals, vecs) = sym_eigen(&t)?;
            let theta = vals[0];
            let resid = (b * vecs[(k - 1, 0)]).abs();
            let done = resid <= tol * theta.abs().max(1e-300) || (last - theta).abs() <= tol * theta.abs() * 1e-2;
            last = theta;
            if done || b < 1e-14 || it + 1 == m {
                let mut y = vec![0.0; n];
                for (i, qq) in qs.iter().enumerate().take(k) {
                    let c = vecs[(i, 0)];
                    y.iter_mut().zip(qq).for_each(|(a, b)| *a += c * b);
                }
                best = (theta, y);
                if done || b < 1e-14 {
                    return Ok(best);
                }
            }
        }
        beta.push(b);
        qs.push(w.iter().map(|x| x / b).collect());
    }
    Ok(best)
}

/// Preconditioned conjugate gradients for a symmetric positive operator
/// restricted to the complement of `basis`. `b` must lie in that complement.
pub fn projected_pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    basis: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project_out(&mut r, basis);
    let bn = norm(&r);
    if bn == 0.0 {
        return Ok(x);
    }
    let mut z = precond(&r);
    project_out(&mut z, basis);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let mut ap = apply(&p);
        project_out(&mut ap, basis);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::PositivityViolation { rayleigh: pap / dot(&p, &p) });
        }
        let a = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += a * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= a * api);
        let rn = norm(&r);
        if rn <= tol * bn {
            return Ok(x);
        }
        z = precond(&r);
        project_out(&mut z, basis);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        if it + 1 == max_iter {
            return Err(Error::ConvergenceFailure {
                iterations: max_iter,
                residual: rn / bn,
            });
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    #[test]
    fn laplacian_matrix_matches_fft_apply() {
        let g = make_grid(16, 2.0).unwrap();
        let a = neg_laplacian_matrix(&g);
        let v: Vec<f64> = (0..16).map(|j| ((j * j) as f64 * 0.37).sin()).collect();
        let w = neg_laplacian_apply(&g, &v);
        for i in 0..16 {
            let s: f64 = (0..16).map(|j| a[(i, j)] * v[j]).sum();
            assert!((s - w[i]).abs() < 1e-10);
            for j in 0..16 {
                assert!((a[(i, j)] - a[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lanczos_finds_restricted_minimum() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let basis = orthonormal_basis(&[e0]);
        let (v, _) = lanczos_smallest(n, |x| x.iter().zip(&diag).map(|(a, b)| a * b).collect(), &basis, 200, 1e-12, 1)
            .unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn pcg_solves_diagonal_system() {
        let n = 30;
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = projected_pcg(
            |x| x.iter().zip(&diag).map(|(a, b)| a * b).collect(),
            |r| r.to_vec(),
            &b,
            &[],
            1e-12,
            200,
        )
        .unwrap();
        for i in 0..n {
            assert!((x[i] * diag[i] - b[i]).abs() < 1e-9);
        }
    }
}
