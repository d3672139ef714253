use phi4lab::fluctstats::{char_func_estimate, Part, TestFunction};
use phi4lab::lattice::{
    hamiltonian, mass_functional, real_inner, spectral_derivative, spectral_mass, ComplexField, TorusGrid,
};
use phi4lab::manifold::{g1, tplus_solve};
use phi4lab::sampler::{Chain, ChainConfig};
use proptest::prelude::*;
use rustfft::num_complex::Complex64;

fn field(n: usize, half: f64, vals: &[(f64, f64)]) -> ComplexField {
    let grid = TorusGrid::new(n, half).unwrap();
    ComplexField::new(grid, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_and_mass_are_gauge_invariant(v in values(32), theta in -7.0..7.0f64, shift in -40i64..40) {
        let f = field(32, 3.0, &v);
        let g = f.rotate(theta).roll(shift);
        let (e0, e1) = (hamiltonian(&f), hamiltonian(&g));
        let scale = e0.kinetic + e0.quartic;
        prop_assert!((e0.total - e1.total).abs() <= 1e-11 * scale);
        let (m0, m1) = (mass_functional(&f), mass_functional(&g));
        prop_assert!((m0 - m1).abs() <= 1e-12 * m0);
    }

    #[test]
    fn parseval(v in values(48)) {
        let f = field(48, 5.0, &v);
        let a = real_inner(&f, &f).unwrap();
        prop_assert!((a - spectral_mass(&f)).abs() <= 1e-10 * a);
    }

    #[test]
    fn derivative_commutes_with_shift(v in values(32), shift in -32i64..32, order in 1u32..4) {
        let f = field(32, 2.0, &v);
        let a = spectral_derivative(&f.roll(shift), order);
        let b = spectral_derivative(&f, order).roll(shift);
        prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-9 * (1.0 + b.max_abs()));
    }

    #[test]
    fn kinetic_and_quartic_parts_are_nonnegative(v in values(24)) {
        let e = hamiltonian(&field(24, 4.0, &v));
        prop_assert!(e.kinetic >= 0.0 && e.quartic >= 0.0);
        prop_assert!((e.total - (e.kinetic - e.quartic)).abs() <= 1e-14 * (e.kinetic + e.quartic));
    }

    #[test]
    fn tplus_root_and_monotonicity(hn in 0.0..4.0f64, gc in -1.0..1.0f64, gs in 0.1..3.0f64, l in 4.0..32.0f64) {
        let hn = hn * l * l;
        let gc = gc * l;
        let d = tplus_solve(hn, gc, gs, l);
        if d.admissible {
            prop_assert!((g1(d.t_plus, gc, gs, l) + 0.5 * hn).abs() <= 1e-10 * hn.max(1.0));
            let e = tplus_solve(hn * 1.01 + 1e-3, gc, gs, l);
            if e.admissible {
                prop_assert!(e.t_plus < d.t_plus);
            }
        }
    }

    #[test]
    fn char_estimate_of_negated_function_is_conjugate(seed in 0u64..1000, center in -1.0..1.0f64) {
        let grid = TorusGrid::new(64, 4.0).unwrap();
        let mut rng = phi4lab::sampler::stream_rng(seed, 0);
        let samples = phi4lab::fluctstats::white_noise_surrogate(grid, 50, &mut rng);
        let g = TestFunction::unit(center).unwrap();
        let a = char_func_estimate(&samples, &g, Part::Re, 1.0).unwrap();
        let b = char_func_estimate(&samples, &g.scaled(-1.0), Part::Re, 1.0).unwrap();
        prop_assert_eq!(a.re, b.re);
        prop_assert_eq!(a.im, -b.im);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn chain_respects_mass_bound_and_is_deterministic(seed in any::<u64>(), d in 0.5..2.0f64, hmc in any::<bool>()) {
        let mut cfg = if hmc {
            ChainConfig::hmc(16, 2.0, d, seed).unwrap()
        } else {
            ChainConfig::new(16, 2.0, d, seed).unwrap()
        };
        cfg.n_steps = 150;
        cfg.burn_in = 50;
        let bound = cfg.mass_bound();
        let mut a = Chain::new(cfg.clone()).unwrap();
        let mut worst: f64 = 0.0;
        a.run_until(150, |s| worst = worst.max(mass_functional(&s.field))).unwrap();
        prop_assert!(worst <= bound * (1.0 + 1e-12));
        let mut b = Chain::new(cfg).unwrap();
        b.run_until(150, |_| {}).unwrap();
        prop_assert_eq!(a.state().field.values(), b.state().field.values());
    }
}
