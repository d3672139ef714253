//! Hamiltonian and autoregressive chains against the importance-sampling
//! oracle on tiny lattices.

use phi4lab::lattice::{mass_functional, quartic_integral};
use phi4lab::sampler::{run_mcmc_chain, smallscale_quadrature_oracle, ChainConfig, Init, OracleConfig};
use phi4lab::stats::mean_estimate;

fn check(cfg: ChainConfig, draws: usize) {
    let (n, l, d) = (cfg.grid.n(), cfg.torus_l, cfg.mass_d);
    let oracle = smallscale_quadrature_oracle(&OracleConfig::new(n, l, d, draws, cfg.seed + 1).unwrap()).unwrap();
    let mut ms = vec![];
    let mut qs = vec![];
    run_mcmc_chain(cfg, |st| {
        ms.push(mass_functional(&st.field));
        qs.push(quartic_integral(&st.field));
    })
    .unwrap();
    let em = mean_estimate(&ms);
    let eq = mean_estimate(&qs);
    let zm = (em.value - oracle.mass.value).abs() / (em.stderr.powi(2) + oracle.mass.stderr.powi(2)).sqrt();
    let zq = (eq.value - oracle.quartic.value).abs() / (eq.stderr.powi(2) + oracle.quartic.stderr.powi(2)).sqrt();
    assert!(em.ess > 2e3 && oracle.ess > 2e3, "ess chain {} oracle {}", em.ess, oracle.ess);
    assert!(zm < 3.5 && zq < 3.5, "n={n} L={l} D={d}: z mass {zm:.2} quartic {zq:.2}");
}

#[test]
fn hmc_matches_oracle() {
    for &(n, l, d) in &[(3usize, 2.0, 1.0), (4, 3.0, 2.0)] {
        let mut cfg = ChainConfig::hmc(n, l, d, 31).unwrap();
        cfg.n_steps = 60_000;
        cfg.burn_in = 2_000;
        cfg.init = Init::FreeField;
        check(cfg, 300_000);
    }
}

#[test]
fn pcn_matches_oracle_with_strong_constraint() {
    let mut cfg = ChainConfig::new(4, 3.0, 2.0, 41).unwrap();
    cfg.n_steps = 200_000;
    cfg.burn_in = 5_000;
    cfg.step_size = 0.5;
    cfg.adapt = true;
    check(cfg, 300_000);
}
