use serde::{Deserialize, Serialize};

use super::{fourier_multiply, ComplexField};
use crate::error::{invalid, Result};

/// Parameters of the weighted Besov norm `B^{s,mu}_{r,q}` with weight
/// `exp(-mu <x>^delta_w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub s: f64,
    pub mu: f64,
    pub delta_w: f64,
    pub r: f64,
    pub q: f64,
}

impl NormSpec {
    pub fn new(s: f64, mu: f64, delta_w: f64, r: f64, q: f64) -> Result<Self> {
        if !(delta_w > 0.0 && delta_w < 1.0) {
            return invalid(format!("delta_w must lie in (0,1), got {delta_w}"));
        }
        if !(mu > 0.0) {
            return invalid(format!("mu must be positive, got {mu}"));
        }
        if !(r >= 1.0) || !r.is_finite() {
            return invalid(format!("r must be finite and >= 1, got {r}"));
        }
        if !(q >= 1.0) {
            return invalid(format!("q must be >= 1, got {q}"));
        }
        if !s.is_finite() {
            return invalid("s must be finite");
        }
        Ok(Self { s, mu, delta_w, r, q })
    }

    /// `H^s_mu = B^{s,mu}_{2,2}` with the default weight exponent 1/2.
    pub fn sobolev(s: f64, mu: f64) -> Result<Self> {
        Self::new(s, mu, 0.5, 2.0, 2.0)
    }
}

fn weight(x: f64, mu: f64, delta: f64) -> f64 {
    (-mu * (1.0 + x * x).sqrt().powf(delta)).exp()
}

/// `(int |f|^r w_mu dx)^{1/r}`.
pub fn weighted_lebesgue_norm(f: &ComplexField, r: f64, mu: f64, delta_w: f64) -> f64 {
    let g = f.grid();
    let s: f64 = f
        .values()
        .iter()
        .enumerate()
        .map(|(j, z)| z.norm().powf(r) * weight(g.x(j), mu, delta_w))
        .sum();
    (s * g.spacing()).powf(1.0 / r)
}

pub(crate) fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

/// Equal to 1 on `[0,1]`, 0 beyond 2, smooth in between.
fn bump0(t: f64) -> f64 {
    smooth_step(2.0 - t)
}

/// Dyadic blocks `Delta_j f`, `j = 0..J`, summing to `f`.
pub fn littlewood_paley_blocks(f: &ComplexField) -> Vec<ComplexField> {
    let g = f.grid();
    let kmax = (0..g.n()).map(|i| g.wavenumber(i).abs()).fold(0.0, f64::max);
    let mut blocks = vec![fourier_multiply(f, |k| bump0(k.abs()))];
    let mut j = 1;
    while 2f64.powi(j - 2) <= kmax.max(1.0) {
        let lo = 2f64.powi(j - 1);
        let hi = 2f64.powi(j);
        blocks.push(fourier_multiply(f, |k| bump0(k.abs() / hi) - bump0(k.abs() / lo)));
        j += 1;
    }
    blocks
}

pub fn weighted_norm(f: &ComplexField, spec: &NormSpec) -> f64 {
    let terms: Vec<f64> = littlewood_paley_blocks(f)
        .iter()
        .enumerate()
        .map(|(j, b)| 2f64.powf(spec.s * j as f64) * weighted_lebesgue_norm(b, spec.r, spec.mu, spec.delta_w))
        .collect();
    if spec.q.is_infinite() {
        terms.into_iter().fold(0.0, f64::max)
    } else {
        terms.iter().map(|t| t.powf(spec.q)).sum::<f64>().powf(1.0 / spec.q)
    }
}
