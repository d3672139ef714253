use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::checkpoint::{self, CheckpointHeader};
use super::config::*;
use super::{num, Outcome, Table};
use crate::error::{Error, Result};
use crate::fluctstats::{
    char_from_pairings, default_shell_epsilon, gaussian_sector_tails, quantile, sector_pairings, variance_from_pairings,
    CharEstimate, FluctuationCollector, FreeEnergyConfig, GaussianSector, PeakStats, TailReport, TestFunction,
    VarianceEstimate,
};
use crate::groundstate::{
    energy_report, line_energy, multiplier_for_mass, solve_ground_state, solve_reference, SolverConfig,
};
use crate::lattice::{mass_functional, quartic_integral, ComplexField, NormSpec, TorusGrid};
use crate::manifold::{CutoffSpec, SolitonManifold};
use crate::sampler::{Chain, ChainConfig, ChainSummary, Init, Kernel};
use crate::schrodinger::{
    build_operators, green_diagnostics, normal_projectors, projected_covariance, restricted_min_rayleigh,
    spectrum_and_zero_modes, variance_pairing, DecayReport,
};
use crate::stats::anderson_darling_normal;

pub(super) fn run(cfg: &ExperimentConfig, dir: &Path, stem: &str) -> Result<Outcome> {
    if let Some(p) = &cfg.groundstate {
        groundstate(p)
    } else if let Some(p) = &cfg.spectrum {
        spectrum(p)
    } else if let Some(p) = &cfg.green {
        green(p)
    } else if let Some(p) = &cfg.gaussian_sector {
        gaussian_sector(p)
    } else if let Some(p) = &cfg.sample {
        sample(p, dir, stem)
    } else if let Some(p) = &cfg.fluct {
        fluct(p)
    } else if let Some(p) = &cfg.free_energy {
        free_energy(p)
    } else {
        Err(Error::Schema("no pipeline selected".into()))
    }
}

fn groundstate(p: &GroundstateParams) -> Result<Outcome> {
    let grid = TorusGrid::new(p.n, p.half_length)?;
    let solver = SolverConfig {
        tolerance: p.tolerance,
        max_iters: p.max_iters,
        ..SolverConfig::default()
    };
    let prof = solve_ground_state(p.d, &grid, &solver)?;
    let e = energy_report(&prof);
    let results = json!({
        "lambda": prof.multiplier_lambda,
        "lambda_line": multiplier_for_mass(p.d),
        "energy": prof.energy_i,
        "energy_line": line_energy(p.d),
        "kinetic": e.kinetic,
        "quartic": e.quartic,
        "scaling_ratio": e.scaling_ratio,
        "mass": prof.mass_d,
        "el_residual": prof.el_residual,
        "iterations": prof.iterations,
        "peak": prof.peak(),
        "width": prof.width(),
    });
    let mut tables = vec![];
    if p.write_profile {
        let mut t = Table::new("profile", &["x", "q"]);
        for (j, v) in prof.values.iter().enumerate() {
            t.row(&[num(grid.x(j)), num(*v)]);
        }
        tables.push(t);
    }
    Ok(Outcome {
        results,
        seeds: vec![],
        tables,
        checkpoints: vec![],
    })
}

/// Grid on `T_{L^2}` with `points_per_unit` points per unit length (even).
fn large_grid(l: f64, ppu: f64) -> Result<TorusGrid> {
    let n = ((ppu * 2.0 * l * l / 2.0).round() as usize * 2).max(8);
    TorusGrid::new(n, l * l)
}

/// Soliton manifold for `(D, L)` on the grid of [`large_grid`].
pub fn manifold_for(d: f64, l: f64, ppu: f64) -> Result<SolitonManifold> {
    let prof = solve_reference(d, &SolverConfig::default())?;
    SolitonManifold::new(&prof, l, large_grid(l, ppu)?, CutoffSpec::large_torus(l))
}

fn spectrum(p: &SpectrumParams) -> Result<Outcome> {
    let mut t = Table::new("eigenvalues", &["L", "operator", "index", "eigenvalue"]);
    let mut per_l = vec![];
    for &l in &p.l_values {
        let m = manifold_for(p.d, l, p.points_per_unit)?;
        let chart = m.chart(0.0, 0.0)?;
        let grid = *m.grid();
        let q = ComplexField::from_real(grid, &chart.real_profile())?;
        let (b1, b2) = build_operators(&q, m.lambda(), grid)?;
        let qv = chart.real_profile();
        let dq = chart.tangent_raw[0].re();
        let rel = |op: &crate::schrodinger::OperatorHandle, v: &[f64]| {
            let r = op.apply(v);
            let a: f64 = r.iter().map(|x| x * x).sum();
            let b: f64 = v.iter().map(|x| x * x).sum();
            (a / b).sqrt()
        };
        let (pr, pi) = normal_projectors(&chart, m.lambda())?;
        let k = p.k.min(grid.n());
        let mut entry = json!({
            "L": l,
            "n": grid.n(),
            "b2_q_residual": rel(&b2, &qv),
            "b1_dq_residual": rel(&b1, &dq),
            "restricted_min_b1": restricted_min_rayleigh(&b1, &pr)?,
            "restricted_min_b2": restricted_min_rayleigh(&b2, &pi)?,
        });
        if b1.matrix().is_some() {
            for (name, op) in [("B1", &b1), ("B2", &b2)] {
                let sp = spectrum_and_zero_modes(op, k)?;
                for (i, (v, _)) in sp.iter().enumerate() {
                    t.row(&[num(l), name.into(), i.to_string(), num(*v)]);
                }
                entry[format!("lowest_{name}")] = json!(sp.iter().map(|s| s.0).collect::<Vec<_>>());
            }
        }
        per_l.push(entry);
    }
    Ok(Outcome {
        results: json!({ "d": p.d, "per_l": per_l }),
        seeds: vec![],
        tables: vec![t],
        checkpoints: vec![],
    })
}

fn green(p: &GreenParams) -> Result<Outcome> {
    let mut kernel = Table::new("kernel", &["L", "r", "G"]);
    let mut rates = Table::new(
        "rates",
        &["L", "rate", "rate_pure_exponential", "target", "lipschitz", "resolvent_residual", "max_abs_green"],
    );
    let mut per_l = vec![];
    for &l in &p.l_values {
        let m = manifold_for(p.d, l, p.points_per_unit)?;
        let chart = m.chart(0.0, 0.0)?;
        let grid = *m.grid();
        let q = ComplexField::from_real(grid, &chart.real_profile())?;
        let (b1, _) = build_operators(&q, m.lambda(), grid)?;
        let (pr, _) = normal_projectors(&chart, m.lambda())?;
        let cov = projected_covariance(&b1, &pr)?;
        let d: DecayReport = green_diagnostics(&cov, 0.0)?;
        let j0 = grid.n() / 2;
        for j in j0..grid.n() {
            if let Some(g) = cov.kernel(j, j0) {
                kernel.row(&[num(l), num(grid.x(j)), num(g)]);
            }
        }
        rates.row(&[
            num(l),
            num(d.rate),
            num(d.rate_pure_exponential),
            num(m.lambda().sqrt()),
            num(d.lipschitz),
            num(d.resolvent_residual),
            num(d.max_abs_green),
        ]);
        per_l.push(json!({ "L": l, "n": grid.n(), "decay": d, "target_rate": m.lambda().sqrt() }));
    }
    Ok(Outcome {
        results: json!({ "d": p.d, "per_l": per_l }),
        seeds: vec![],
        tables: vec![kernel, rates],
        checkpoints: vec![],
    })
}

/// Gaussian-sector statistics at one `L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorPoint {
    pub torus_l: f64,
    pub n: usize,
    pub norm_sq: f64,
    /// `<C1 g_L, g_L>` computed from the covariance.
    pub exact_variance: f64,
    pub sample_variance: f64,
    pub sample_variance_stderr: f64,
    pub anderson_darling: f64,
    pub normality_rejected: bool,
    pub char_re: Option<CharEstimate>,
    pub char_im: Option<CharEstimate>,
    pub admissible_fraction: f64,
    pub max_orthogonality_residual: f64,
    pub tails: Option<TailReport>,
}

fn test_function(p: &TestFunctionParams, l: f64) -> Result<TestFunction> {
    TestFunction::bump(p.center_fraction * l, p.half_width, p.norm)
}

pub fn sector_point(p: &GaussianSectorParams, l: f64, with_tails: bool) -> Result<SectorPoint> {
    let m = manifold_for(p.d, l, p.points_per_unit)?;
    let sector = GaussianSector::build(&m, 0.0, 0.0)?;
    let g = test_function(&p.test_function, l)?;
    let exact = variance_pairing(&sector.cov_re, &g, l, 0.0)?;
    let s = sector_pairings(&sector, &g, l, p.draws, p.with_weight, p.seed)?;
    let nd = s.re.len() as f64;
    let (var, se) = match &s.weights {
        None => {
            let v = crate::stats::variance(&s.re);
            (v, v * (2.0 / (nd - 1.0)).sqrt())
        }
        Some(w) => {
            let sw: f64 = w.iter().sum();
            let mu = s.re.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
            let v = s.re.iter().zip(w).map(|(a, b)| b * (a - mu).powi(2)).sum::<f64>() / sw;
            (v, v * (2.0 / crate::fluctstats::weighted_ess(w)).sqrt())
        }
    };
    let ad = anderson_darling_normal(&s.re);
    let w = s.weights.as_deref();
    let tails = if with_tails {
        Some(gaussian_sector_tails(
            &sector,
            l,
            p.draws.min(2000),
            &p.k_values,
            p.l2_threshold,
            NormSpec::sobolev(p.besov_s, p.besov_mu)?,
            p.seed.wrapping_add(1),
        )?)
    } else {
        None
    };
    Ok(SectorPoint {
        torus_l: l,
        n: m.grid().n(),
        norm_sq: g.l2_norm_sq(),
        exact_variance: exact.value,
        sample_variance: var,
        sample_variance_stderr: se,
        anderson_darling: ad.a2_star,
        normality_rejected: ad.rejected,
        char_re: char_from_pairings(&s.re, w, g.l2_norm_sq(), 0.0).ok(),
        char_im: char_from_pairings(&s.im, w, g.l2_norm_sq(), 0.0).ok(),
        admissible_fraction: s.admissible_fraction,
        max_orthogonality_residual: s.max_orthogonality_residual,
        tails,
    })
}

fn gaussian_sector(p: &GaussianSectorParams) -> Result<Outcome> {
    let mut t = Table::new("estimates", &["L", "quantity", "estimate", "stderr", "target"]);
    let mut tails = Table::new("tails", &["L", "K", "sup_exceedance"]);
    let mut points = vec![];
    for &l in &p.l_values {
        let s = sector_point(p, l, true)?;
        t.row(&[num(l), "variance_exact".into(), num(s.exact_variance), num(0.0), num(s.norm_sq)]);
        t.row(&[
            num(l),
            "variance_sample".into(),
            num(s.sample_variance),
            num(s.sample_variance_stderr),
            num(s.norm_sq),
        ]);
        for (name, c) in [("char_re", s.char_re), ("char_im", s.char_im)] {
            if let Some(c) = c {
                t.row(&[num(l), name.into(), num(c.re), num(c.stderr()), num(c.target)]);
            }
        }
        if let Some(tr) = &s.tails {
            for (k, e) in tr.k_values.iter().zip(&tr.sup_exceedance) {
                tails.row(&[num(l), num(*k), num(*e)]);
            }
        }
        points.push(s);
    }
    Ok(Outcome {
        results: json!({ "d": p.d, "points": points }),
        seeds: vec![json!({ "seed": p.seed, "stream": 0 })],
        tables: vec![t, tails],
        checkpoints: vec![],
    })
}

/// Chain configuration for chain `index` of a parameter set.
pub fn chain_config(n: usize, l: f64, d: f64, p: &ChainParams, index: usize) -> Result<ChainConfig> {
    let seeds = p.chain_seeds();
    let seed = *seeds
        .get(index)
        .ok_or_else(|| Error::Schema(format!("no seed for chain {index}")))?;
    let mut c = match p.kernel {
        KernelName::Hmc => {
            let mut c = ChainConfig::hmc(n, l, d, seed)?;
            c.kernel = Kernel::Hmc {
                n_leapfrog: p.n_leapfrog,
            };
            c
        }
        KernelName::Pcn => {
            let mut c = ChainConfig::new(n, l, d, seed)?;
            c.adapt = true;
            c.symmetry_moves = true;
            c.init = Init::Soliton;
            c
        }
    };
    c.chain_id = index as u64;
    c.n_steps = p.steps;
    c.burn_in = p.burn_in;
    c.thin = p.thin;
    c.step_size = p.step_size;
    c.validate()?;
    Ok(c)
}

fn observation_row(t: &mut Table, chain: usize, st: &crate::sampler::ChainState) {
    t.row(&[
        chain.to_string(),
        st.step_index.to_string(),
        num(mass_functional(&st.field)),
        num(0.25 * quartic_integral(&st.field)),
        num(st.field.max_abs()),
    ]);
}

const OBS_HEADER: [&str; 5] = ["chain", "step", "mass", "quartic", "peak"];

fn ckpt_path(dir: &Path, stem: &str, chain: usize, step: u64) -> PathBuf {
    dir.join(format!("{stem}_chain{chain}_step{step}.ckpt"))
}

fn sample(p: &SampleParams, dir: &Path, stem: &str) -> Result<Outcome> {
    let mut obs = Table::new("observables", &OBS_HEADER);
    let mut summaries = vec![];
    let mut seeds = vec![];
    let mut ckpts = vec![];
    for i in 0..p.chain.chains {
        let cfg = chain_config(p.n, p.l, p.d, &p.chain, i)?;
        seeds.push(json!({ "chain": i, "seed": cfg.seed, "stream": cfg.chain_id }));
        let mut chain = Chain::new(cfg)?;
        let total = p.chain.steps;
        let every = if p.checkpoint_every == 0 { total } else { p.checkpoint_every };
        let mut next = every.min(total);
        loop {
            chain.run_until(next, |st| observation_row(&mut obs, i, st))?;
            let path = ckpt_path(dir, stem, i, next);
            checkpoint::write(&chain, &path)?;
            ckpts.push(path);
            if next >= total {
                break;
            }
            next = (next + every).min(total);
        }
        summaries.push(summary_json(i, &chain.summary(), &chain));
    }
    Ok(Outcome {
        results: json!({ "chains": summaries }),
        seeds,
        tables: vec![obs],
        checkpoints: ckpts,
    })
}

fn summary_json(i: usize, s: &ChainSummary, chain: &Chain) -> serde_json::Value {
    let f = &chain.state().field;
    json!({
        "chain": i,
        "summary": s,
        "final_mass": mass_functional(f),
        "final_peak": f.max_abs(),
        "final_field_hash": field_hash(f),
    })
}

/// SHA-256 of the little-endian bytes of a field.
pub(super) fn field_hash(f: &ComplexField) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for z in f.values() {
        h.update(z.re.to_le_bytes());
        h.update(z.im.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

pub(super) fn resume_chain(
    header: &CheckpointHeader,
    field: ComplexField,
    until: Option<u64>,
    dir: &Path,
    stem: &str,
) -> Result<Outcome> {
    let mut chain = checkpoint::restore(header, field)?;
    let target = until.unwrap_or(header.config.n_steps);
    if target < header.step {
        return Err(Error::InvalidArgument(format!(
            "resume target {target} precedes the checkpoint step {}",
            header.step
        )));
    }
    let mut obs = Table::new("observables", &OBS_HEADER);
    let i = header.config.chain_id as usize;
    chain.run_until(target, |st| observation_row(&mut obs, i, st))?;
    let path = dir.join(format!("{stem}_step{target}.ckpt"));
    checkpoint::write(&chain, &path)?;
    Ok(Outcome {
        results: json!({ "chains": [summary_json(i, &chain.summary(), &chain)] }),
        seeds: vec![json!({ "chain": i, "seed": header.config.seed, "stream": header.config.chain_id })],
        tables: vec![obs],
        checkpoints: vec![path],
    })
}

/// Fluctuation statistics from the chains at one `L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluctPoint {
    pub torus_l: f64,
    pub n: usize,
    pub norm_sq: f64,
    pub char_re: std::result::Result<CharEstimate, String>,
    pub char_im: std::result::Result<CharEstimate, String>,
    pub variance: std::result::Result<VarianceEstimate, String>,
    pub fraction_outside_tube: f64,
    pub ambiguous: usize,
    pub shell_occupancy: f64,
    pub shell_epsilon: f64,
    pub peak: PeakStats,
    pub snapshots: usize,
    pub acceptance: Vec<f64>,
}

pub fn fluct_point(p: &FluctParams, l: f64) -> Result<FluctPoint> {
    let m = manifold_for(p.d, l, p.points_per_unit)?;
    let n = m.grid().n();
    let g = test_function(&p.test_function, l)?;
    let eps = p.shell_epsilon.unwrap_or_else(|| default_shell_epsilon(l));
    let bound = l * p.d;
    let cfgs: Vec<ChainConfig> = (0..p.chain.chains)
        .map(|i| chain_config(n, l, p.d, &p.chain, i))
        .collect::<Result<_>>()?;
    // independent chains, merged in chain order
    let results: Vec<Result<(FluctuationCollector, Vec<f64>, usize, f64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfgs
            .into_iter()
            .map(|cfg| {
                let m = m.clone();
                let g = g;
                s.spawn(move || -> Result<(FluctuationCollector, Vec<f64>, usize, f64)> {
                    let mut col = FluctuationCollector::new(m, p.delta, &g)?;
                    let mut peaks = vec![];
                    let mut shell = 0usize;
                    let mut err = None;
                    let mut chain = Chain::new(cfg)?;
                    let total = chain.config().n_steps;
                    chain.run_until(total, |st| {
                        if err.is_some() {
                            return;
                        }
                        if let Err(e) = col.observe(&st.field) {
                            err = Some(e);
                        }
                        let mass = mass_functional(&st.field);
                        if mass >= bound - l * eps && mass <= bound {
                            shell += 1;
                        }
                        peaks.push(st.field.max_abs());
                    })?;
                    if let Some(e) = err {
                        return Err(e);
                    }
                    Ok((col, peaks, shell, chain.summary().acceptance_rate))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::LinAlg("chain worker panicked".into()))))
            .collect()
    });
    let mut re = vec![];
    let mut im = vec![];
    let mut peaks = vec![];
    let (mut shell, mut total, mut outside, mut ambiguous) = (0, 0, 0, 0);
    let mut acceptance = vec![];
    for r in results {
        let (col, pk, sh, acc) = r?;
        re.extend_from_slice(&col.re);
        im.extend_from_slice(&col.im);
        peaks.extend(pk);
        shell += sh;
        total += col.total;
        outside += col.outside + col.ambiguous;
        ambiguous += col.ambiguous;
        acceptance.push(acc);
    }
    let norm_sq = g.l2_norm_sq();
    let to_s = |e: Error| e.to_string();
    Ok(FluctPoint {
        torus_l: l,
        n,
        norm_sq,
        char_re: char_from_pairings(&re, None, norm_sq, p.min_ess).map_err(to_s),
        char_im: char_from_pairings(&im, None, norm_sq, p.min_ess).map_err(to_s),
        variance: variance_from_pairings(&re, norm_sq, p.min_ess).map_err(to_s),
        fraction_outside_tube: outside as f64 / total.max(1) as f64,
        ambiguous,
        shell_occupancy: shell as f64 / total.max(1) as f64,
        shell_epsilon: eps,
        peak: PeakStats {
            median: quantile(&peaks, 0.5),
            lower_quartile: quantile(&peaks, 0.25),
            upper_quartile: quantile(&peaks, 0.75),
            target: l * (2.0 * m.lambda()).sqrt(),
        },
        snapshots: total,
        acceptance,
    })
}

fn fluct(p: &FluctParams) -> Result<Outcome> {
    let mut t = Table::new(
        "estimates",
        &["L", "quantity", "estimate", "stderr", "target", "ess"],
    );
    let mut conc = Table::new(
        "concentration",
        &["L", "outside_tube", "shell_occupancy", "peak_median", "peak_q1", "peak_q3", "peak_target"],
    );
    let mut points = vec![];
    for &l in &p.l_values {
        let f = fluct_point(p, l)?;
        for (name, c) in [("char_re", &f.char_re), ("char_im", &f.char_im)] {
            if let Ok(c) = c {
                t.row(&[num(l), name.into(), num(c.re), num(c.stderr()), num(c.target), num(c.ess)]);
            }
        }
        if let Ok(v) = &f.variance {
            t.row(&[num(l), "variance".into(), num(v.variance), num(v.stderr), num(v.target), num(v.ess)]);
        }
        conc.row(&[
            num(l),
            num(f.fraction_outside_tube),
            num(f.shell_occupancy),
            num(f.peak.median),
            num(f.peak.lower_quartile),
            num(f.peak.upper_quartile),
            num(f.peak.target),
        ]);
        points.push(f);
    }
    let seeds = p
        .chain
        .chain_seeds()
        .iter()
        .enumerate()
        .map(|(i, s)| json!({ "chain": i, "seed": s, "stream": i }))
        .collect();
    Ok(Outcome {
        results: json!({ "d": p.d, "points": points }),
        seeds,
        tables: vec![t, conc],
        checkpoints: vec![],
    })
}

fn free_energy(p: &FreeEnergyParams) -> Result<Outcome> {
    let mut t = Table::new(
        "estimates",
        &["D", "log_z", "stderr", "density", "density_stderr", "target"],
    );
    let mut reports = vec![];
    for &d in &p.d_values {
        let mut c = FreeEnergyConfig::new(p.n, p.seed);
        c.lambda_grid = p.lambda_grid.clone();
        c.n_steps = p.steps;
        c.burn_in = p.burn_in;
        c.ball_draws = p.ball_draws;
        c.min_ess = p.min_ess;
        let r = crate::fluctstats::free_energy_estimate(p.l, d, &c)?;
        t.row(&[
            num(d),
            num(r.log_z),
            num(r.log_z_stderr),
            num(r.density),
            num(r.density_stderr),
            num(-line_energy(d)),
        ]);
        reports.push(r);
    }
    Ok(Outcome {
        results: json!({ "l": p.l, "reports": reports }),
        seeds: vec![json!({ "seed": p.seed })],
        tables: vec![t],
        checkpoints: vec![],
    })
}
