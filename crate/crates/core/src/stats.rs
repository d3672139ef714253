//! Small statistics toolkit: effective sample size, batch jackknife,
//! normality testing.

use serde::{Deserialize, Serialize};
use rustfft::num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::lattice::{fft_forward, fft_inverse};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Autocovariances `gamma_0..gamma_{max_lag}` (biased normalization), by FFT.
fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for (b, v) in buf.iter_mut().zip(x) {
        b.re = v - m;
    }
    fft_forward(&mut buf);
    for b in buf.iter_mut() {
        *b = Complex64::new(b.norm_sqr(), 0.0);
    }
    fft_inverse(&mut buf);
    (0..=max_lag.min(n - 1)).map(|k| buf[k].re / n as f64).collect()
}

/// Integrated autocorrelation time by Geyer's initial monotone sequence.
pub fn integrated_autocorrelation_time(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let gam = autocovariance(x, n - 1);
    if gam[0] <= 0.0 {
        return 1.0;
    }
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < gam.len() {
        let pair = (gam[2 * k] + gam[2 * k + 1]) / gam[0];
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        k += 1;
    }
    tau.max(1.0 / n as f64).max(1.0)
}

pub fn effective_sample_size(x: &[f64]) -> f64 {
    x.len() as f64 / integrated_autocorrelation_time(x)
}

/// ESS of a complex series: the smaller of the two component values.
pub fn effective_sample_size_pair(re: &[f64], im: &[f64]) -> f64 {
    effective_sample_size(re).min(effective_sample_size(im))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub ess: f64,
}

/// Delete-one-block jackknife of a statistic over `n_blocks` contiguous
/// blocks.
pub fn block_jackknife(x: &[f64], n_blocks: usize, stat: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let n = x.len();
    let b = n_blocks.clamp(2, n.max(2));
    let size = n / b;
    let full = stat(x);
    if size == 0 {
        return (full, f64::NAN);
    }
    let used = size * b;
    let reps: Vec<f64> = (0..b)
        .map(|i| {
            let mut rest = Vec::with_capacity(used - size);
            rest.extend_from_slice(&x[..i * size]);
            rest.extend_from_slice(&x[(i + 1) * size..used]);
            stat(&rest)
        })
        .collect();
    let m = mean(&reps);
    let var = reps.iter().map(|r| (r - m).powi(2)).sum::<f64>() * (b as f64 - 1.0) / b as f64;
    (full, var.sqrt())
}

/// Mean with a jackknife standard error using blocks much longer than the
/// autocorrelation time.
pub fn mean_estimate(x: &[f64]) -> Estimate {
    let tau = integrated_autocorrelation_time(x);
    let blocks = ((x.len() as f64 / (5.0 * tau)).floor() as usize).clamp(2, 100);
    let (v, se) = block_jackknife(x, blocks, mean);
    Estimate {
        value: v,
        stderr: se,
        ess: x.len() as f64 / tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndersonDarling {
    /// Statistic with the small-sample correction for estimated mean and variance.
    pub a2_star: f64,
    /// Critical value at the 1% level.
    pub critical_1pct: f64,
    pub rejected: bool,
}

/// Anderson-Darling normality test with mean and variance estimated.
pub fn anderson_darling_normal(x: &[f64]) -> AndersonDarling {
    let n = x.len();
    let m = mean(x);
    let s = variance(x).sqrt();
    let mut z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
    z.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let nd = Normal::new(0.0, 1.0).expect("standard normal");
    let nf = n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let fi = nd.cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let fj = nd.cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        sum += (2.0 * i as f64 + 1.0) * (fi.ln() + (1.0 - fj).ln());
    }
    let a2 = -nf - sum / nf;
    let a2_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let critical_1pct = 1.035;
    AndersonDarling {
        a2_star,
        critical_1pct,
        rejected: a2_star > critical_1pct,
    }
}

/// Two-sided z-test p-value for the difference of two independent estimates.
pub fn two_sample_p_value(a: Estimate, b: Estimate) -> f64 {
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let z = ((a.value - b.value) / se).abs();
    let nd = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * (1.0 - nd.cdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ar1_autocorrelation_time() {
        // tau = (1 + a)/(1 - a) for an AR(1) series
        let a: f64 = 0.8;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = vec![0.0; 200_000];
        for i in 1..x.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[i] = a * x[i - 1] + e;
        }
        let tau = integrated_autocorrelation_time(&x);
        assert!((tau - 9.0).abs() < 0.6, "{tau}");
    }

    #[test]
    fn anderson_darling_accepts_normals_rejects_exponentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(!anderson_darling_normal(&x).rejected);
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        assert!(anderson_darling_normal(&y).rejected);
    }

    #[test]
    fn jackknife_of_mean_matches_standard_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = mean_estimate(&x);
        assert!((e.stderr - 0.01).abs() < 0.002, "{e:?}");
    }
}
