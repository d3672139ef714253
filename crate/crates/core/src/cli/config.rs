//! Experiment configuration files (TOML, one table per pipeline).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_VERSION: &str = "phi4lab-config/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Pcn,
    Hmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundstateParams {
    pub d: f64,
    pub n: usize,
    pub half_length: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "yes")]
    pub write_profile: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    pub d: f64,
    pub l_values: Vec<f64>,
    #[serde(default = "default_ppu")]
    pub points_per_unit: f64,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenParams {
    pub d: f64,
    pub l_values: Vec<f64>,
    #[serde(default = "default_ppu")]
    pub points_per_unit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionParams {
    /// Centre on `T_L` as a fraction of `L` (0.5 puts it half way to the
    /// antipode of the soliton centre).
    #[serde(default = "default_center_fraction")]
    pub center_fraction: f64,
    #[serde(default = "one")]
    pub half_width: f64,
    #[serde(default = "one")]
    pub norm: f64,
}

impl Default for TestFunctionParams {
    fn default() -> Self {
        Self {
            center_fraction: default_center_fraction(),
            half_width: 1.0,
            norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSectorParams {
    pub d: f64,
    pub l_values: Vec<f64>,
    #[serde(default = "default_ppu")]
    pub points_per_unit: f64,
    pub draws: usize,
    pub seed: u64,
    #[serde(default)]
    pub test_function: TestFunctionParams,
    /// Add the radial component and reweight by the conditional density.
    #[serde(default)]
    pub with_weight: bool,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<f64>,
    #[serde(default = "default_l2_threshold")]
    pub l2_threshold: f64,
    #[serde(default = "default_besov_s")]
    pub besov_s: f64,
    #[serde(default = "default_besov_mu")]
    pub besov_mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "one_u64")]
    pub thin: u64,
    /// One seed per chain; if absent, `seed + i` for chain `i`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub chains: usize,
    #[serde(default = "default_kernel")]
    pub kernel: KernelName,
    #[serde(default = "default_leapfrog")]
    pub n_leapfrog: usize,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            burn_in: default_burn_in(),
            thin: 1,
            seeds: None,
            seed: 0,
            chains: 1,
            kernel: default_kernel(),
            n_leapfrog: default_leapfrog(),
            step_size: default_step_size(),
        }
    }
}

impl ChainParams {
    pub fn chain_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.chains as u64).map(|i| self.seed.wrapping_add(i)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleParams {
    pub l: f64,
    pub d: f64,
    pub n: usize,
    /// `[<section>.chain]` table.
    #[serde(default)]
    pub chain: ChainParams,
    /// Write a checkpoint every this many steps (0: only at the end).
    #[serde(default)]
    pub checkpoint_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctParams {
    pub d: f64,
    pub l_values: Vec<f64>,
    #[serde(default = "default_ppu")]
    pub points_per_unit: f64,
    /// `[<section>.chain]` table.
    #[serde(default)]
    pub chain: ChainParams,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub test_function: TestFunctionParams,
    #[serde(default = "default_min_ess")]
    pub min_ess: f64,
    /// Shell width; defaults to `10^3 L^-3 log L`.
    #[serde(default)]
    pub shell_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeEnergyParams {
    pub l: f64,
    pub d_values: Vec<f64>,
    pub n: usize,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_fe_steps")]
    pub steps: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ball_draws")]
    pub ball_draws: usize,
    #[serde(default = "default_fe_min_ess")]
    pub min_ess: f64,
}

/// A configuration file: the schema version, optional output settings and
/// exactly one pipeline table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundstate: Option<GroundstateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green: Option<GreenParams>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "gaussian-sector")]
    pub gaussian_sector: Option<GaussianSectorParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluct: Option<FluctParams>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "free-energy")]
    pub free_energy: Option<FreeEnergyParams>,
}

fn default_tolerance() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    100_000
}
fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn one_usize() -> usize {
    1
}
fn default_ppu() -> f64 {
    2.0
}
fn default_k() -> usize {
    8
}
fn default_center_fraction() -> f64 {
    0.5
}
fn default_k_values() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0]
}
fn default_l2_threshold() -> f64 {
    4.0
}
fn default_besov_s() -> f64 {
    -0.6
}
fn default_besov_mu() -> f64 {
    0.1
}
fn default_steps() -> u64 {
    10_000
}
fn default_burn_in() -> u64 {
    1_000
}
fn default_kernel() -> KernelName {
    KernelName::Hmc
}
fn default_leapfrog() -> usize {
    8
}
fn default_step_size() -> f64 {
    0.15
}
fn default_delta() -> f64 {
    0.5
}
fn default_min_ess() -> f64 {
    1e3
}
fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}
fn default_fe_steps() -> u64 {
    20_000
}
fn default_ball_draws() -> usize {
    100_000
}
fn default_fe_min_ess() -> f64 {
    100.0
}

/// Line (1-based) of `key` inside `[section]`, for diagnostics.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut in_section = section.is_empty();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            let name = t.trim_matches(|c| c == '[' || c == ']').trim();
            in_section = name == section || name.starts_with(&format!("{section}."));
            continue;
        }
        if in_section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Check<'a> {
    src: &'a str,
    section: &'static str,
    problems: Vec<String>,
}

impl Check<'_> {
    fn fail(&mut self, key: &str, msg: String) {
        let loc = locate(self.src, self.section, key).map(|l| format!("line {l}: ")).unwrap_or_default();
        self.problems.push(format!("{loc}{}.{key}: {msg}", self.section));
    }

    fn positive(&mut self, key: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.fail(key, format!("must be positive and finite, got {v}"));
        }
    }

    fn range(&mut self, key: &str, v: f64, lo: f64, hi: f64) {
        if !(v >= lo && v <= hi) {
            self.fail(key, format!("must lie in [{lo}, {hi}], got {v}"));
        }
    }

    fn count(&mut self, key: &str, v: usize, lo: usize, hi: usize) {
        if v < lo || v > hi {
            self.fail(key, format!("must lie in [{lo}, {hi}], got {v}"));
        }
    }

    fn l_values(&mut self, v: &[f64]) {
        if v.is_empty() {
            self.fail("l_values", "must not be empty".into());
        }
        for l in v {
            self.range("l_values", *l, 1.0, 1e4);
        }
    }

    fn test_function(&mut self, g: &TestFunctionParams) {
        self.range("center_fraction", g.center_fraction, -1.0, 1.0);
        self.positive("half_width", g.half_width);
        self.positive("norm", g.norm);
    }

    fn chain(&mut self, c: &ChainParams) {
        if c.steps == 0 || c.burn_in >= c.steps {
            self.fail("burn_in", format!("must be below steps ({}), got {}", c.steps, c.burn_in));
        }
        if c.thin == 0 {
            self.fail("thin", "must be at least 1".into());
        }
        self.range("step_size", c.step_size, 1e-6, 1.0);
        if c.kernel == KernelName::Hmc {
            self.count("n_leapfrog", c.n_leapfrog, 1, 1000);
        }
        self.count("chains", c.chains, 1, 1024);
        let seeds = c.chain_seeds();
        if seeds.len() != c.chains {
            self.fail("seeds", format!("{} seeds given for {} chains", seeds.len(), c.chains));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            self.fail("seeds", format!("duplicate random stream: seed {} used by two chains", w[0]));
        }
    }
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(src).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate_with_source(src)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Name of the selected pipeline.
    pub fn command(&self) -> Result<&'static str> {
        let present: Vec<&'static str> = [
            ("groundstate", self.groundstate.is_some()),
            ("spectrum", self.spectrum.is_some()),
            ("green", self.green.is_some()),
            ("gaussian-sector", self.gaussian_sector.is_some()),
            ("sample", self.sample.is_some()),
            ("fluct", self.fluct.is_some()),
            ("free-energy", self.free_energy.is_some()),
        ]
        .into_iter()
        .filter(|p| p.1)
        .map(|p| p.0)
        .collect();
        match present.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::Schema("no pipeline table ([groundstate], [sample], ...) present".into())),
            many => Err(Error::Schema(format!("exactly one pipeline table expected, found {}", many.join(", ")))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_source("")
    }

    fn validate_with_source(&self, src: &str) -> Result<()> {
        if self.version.is_empty() {
            return Err(Error::Schema("version string missing".into()));
        }
        if self.version != CONFIG_VERSION {
            return Err(Error::VersionMismatch {
                found: self.version.clone(),
                expected: CONFIG_VERSION.into(),
            });
        }
        let command = self.command()?;
        let section = match command {
            "groundstate" => "groundstate",
            "spectrum" => "spectrum",
            "green" => "green",
            "gaussian-sector" => "gaussian-sector",
            "sample" => "sample",
            "fluct" => "fluct",
            _ => "free-energy",
        };
        let mut c = Check {
            src,
            section,
            problems: vec![],
        };
        if let Some(p) = &self.groundstate {
            c.range("d", p.d, 1e-3, 100.0);
            c.count("n", p.n, 8, 1 << 20);
            c.positive("half_length", p.half_length);
            c.range("tolerance", p.tolerance, 1e-14, 1e-2);
            c.count("max_iters", p.max_iters, 1, 100_000_000);
        }
        if let Some(p) = &self.spectrum {
            c.range("d", p.d, 1e-3, 100.0);
            c.l_values(&p.l_values);
            c.positive("points_per_unit", p.points_per_unit);
            c.count("k", p.k, 1, 1000);
        }
        if let Some(p) = &self.green {
            c.range("d", p.d, 1e-3, 100.0);
            c.l_values(&p.l_values);
            c.positive("points_per_unit", p.points_per_unit);
        }
        if let Some(p) = &self.gaussian_sector {
            c.range("d", p.d, 1e-3, 100.0);
            c.l_values(&p.l_values);
            c.positive("points_per_unit", p.points_per_unit);
            c.count("draws", p.draws, 2, 100_000_000);
            c.test_function(&p.test_function);
            if p.k_values.is_empty() {
                c.fail("k_values", "must not be empty".into());
            }
            for k in &p.k_values {
                c.positive("k_values", *k);
            }
            c.positive("l2_threshold", p.l2_threshold);
            c.positive("besov_mu", p.besov_mu);
        }
        if let Some(p) = &self.sample {
            c.range("l", p.l, 1.0, 1e4);
            c.range("d", p.d, 1e-3, 100.0);
            c.count("n", p.n, 2, 1 << 20);
            c.chain(&p.chain);
        }
        if let Some(p) = &self.fluct {
            c.range("d", p.d, 1e-3, 100.0);
            c.l_values(&p.l_values);
            c.positive("points_per_unit", p.points_per_unit);
            c.chain(&p.chain);
            c.range("delta", p.delta, 1e-6, 10.0);
            c.test_function(&p.test_function);
            c.range("min_ess", p.min_ess, 0.0, 1e12);
            if let Some(e) = p.shell_epsilon {
                c.positive("shell_epsilon", e);
            }
        }
        if let Some(p) = &self.free_energy {
            c.range("l", p.l, 1.0, 1e4);
            if p.d_values.is_empty() {
                c.fail("d_values", "must not be empty".into());
            }
            for d in &p.d_values {
                c.range("d_values", *d, 1e-3, 100.0);
            }
            c.count("n", p.n, 2, 1 << 20);
            let g = &p.lambda_grid;
            let ok = !g.is_empty()
                && g[0] == 0.0
                && g.windows(2).all(|w| w[1] > w[0])
                && (g.len() == 1 || *g.last().expect("non-empty") == 1.0);
            if !ok {
                c.fail("lambda_grid", "must increase from 0 to 1 (or be [0])".into());
            }
            if p.steps == 0 || p.burn_in >= p.steps {
                c.fail("burn_in", format!("must be below steps ({})", p.steps));
            }
            c.count("ball_draws", p.ball_draws, 10, 100_000_000);
        }
        if c.problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(c.problems.join("\n")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groundstate_config_roundtrip() {
        let src = "version = \"phi4lab-config/1\"\n[groundstate]\nd = 1.0\nn = 256\nhalf_length = 20.0\n";
        let c = ExperimentConfig::parse(src).unwrap();
        assert_eq!(c.command().unwrap(), "groundstate");
        let again = ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn negative_d_reports_line() {
        let src = "version = \"phi4lab-config/1\"\n[groundstate]\nd = -1.0\nn = 256\nhalf_length = 20.0\n";
        match ExperimentConfig::parse(src) {
            Err(Error::Schema(m)) => assert!(m.contains("line 3") && m.contains("groundstate.d"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_streams_rejected() {
        let src = "version = \"phi4lab-config/1\"\n[sample]\nl = 4.0\nd = 1.0\nn = 32\n[sample.chain]\nchains = 2\nseeds = [7, 7]\n";
        match ExperimentConfig::parse(src) {
            Err(Error::Schema(m)) => assert!(m.contains("duplicate"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_and_two_tables() {
        let src = "version = \"phi4lab-config/1\"\n[groundstate]\nd = 1.0\nn = 256\nhalf_length = 20.0\nbogus = 1\n";
        assert!(matches!(ExperimentConfig::parse(src), Err(Error::Schema(_))));
        let src = "version = \"phi4lab-config/1\"\n[green]\nd = 1.0\nl_values = [8.0]\n[spectrum]\nd = 1.0\nl_values = [8.0]\n";
        assert!(matches!(ExperimentConfig::parse(src), Err(Error::Schema(_))));
        let src = "version = \"phi4lab-config/9\"\n[green]\nd = 1.0\nl_values = [8.0]\n";
        assert!(matches!(ExperimentConfig::parse(src), Err(Error::VersionMismatch { .. })));
    }
}
