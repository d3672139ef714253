//! Experiment orchestration: configuration files, pipelines, checkpoints
//! and report files.
//!
//! Every pipeline writes `<name>.json` (versioned report embedding the
//! configuration, its SHA-256 and the seeds) and one or more CSV tables.
//! The default output directory is `$PHI4LAB_OUT`, or the working
//! directory when unset.

pub mod checkpoint;
pub mod config;
mod pipelines;

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use checkpoint::{CheckpointHeader, CHECKPOINT_VERSION};
pub use config::{
    ChainParams, ExperimentConfig, FluctParams, FreeEnergyParams, GaussianSectorParams, GreenParams, GroundstateParams,
    KernelName, SampleParams, SpectrumParams, TestFunctionParams, CONFIG_VERSION,
};
pub use pipelines::{
    chain_config, fluct_point, manifold_for, sector_point, FluctPoint, SectorPoint,
};

use crate::error::{Error, Result};
use crate::fluctstats::REPORT_VERSION;

pub const OUTPUT_ENV: &str = "PHI4LAB_OUT";

/// Process exit code for an error: 2 schema, 3 numerical, 4 version,
/// 5 truncated payload, 1 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Schema(_) | Error::InvalidArgument(_) => 2,
        Error::VersionMismatch { .. } => 4,
        Error::TruncatedPayload(_) => 5,
        Error::Io(_) | Error::Json(_) => 1,
        _ => 3,
    }
}

/// Lowercase hex SHA-256 of the compact JSON form of `v`.
pub fn hash_json<T: Serialize>(v: &T) -> Result<String> {
    let bytes = serde_json::to_vec(v)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Explicit directory, else the config's, else `$PHI4LAB_OUT`, else `.`.
pub fn output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return PathBuf::from(p);
    }
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Files written by a run and the report itself.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report_path: PathBuf,
    pub csv_paths: Vec<PathBuf>,
    pub checkpoint_paths: Vec<PathBuf>,
    pub report: serde_json::Value,
}

/// A CSV table under construction.
pub(crate) struct Table {
    pub name: String,
    header: Vec<&'static str>,
    rows: Vec<String>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            header: header.to_vec(),
            rows: vec![],
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells.join(","));
    }

    fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

pub(crate) fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Collected results of a pipeline before they are written.
pub(crate) struct Outcome {
    pub results: serde_json::Value,
    pub seeds: Vec<serde_json::Value>,
    pub tables: Vec<Table>,
    pub checkpoints: Vec<PathBuf>,
}

fn file_stem(cfg: &ExperimentConfig, command: &str) -> String {
    cfg.name.clone().unwrap_or_else(|| command.to_string())
}

fn write_outputs(cfg: &ExperimentConfig, command: &str, dir: &Path, out: Outcome) -> Result<RunOutput> {
    let stem = file_stem(cfg, command);
    let report = serde_json::json!({
        "version": REPORT_VERSION,
        "command": command,
        "config_hash": hash_json(cfg)?,
        "config": cfg,
        "seeds": out.seeds,
        "results": out.results,
    });
    let report_path = dir.join(format!("{stem}.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    let mut csv_paths = vec![];
    for t in &out.tables {
        let p = dir.join(format!("{stem}_{}.csv", t.name));
        std::fs::write(&p, t.render())?;
        csv_paths.push(p);
    }
    Ok(RunOutput {
        report_path,
        csv_paths,
        checkpoint_paths: out.checkpoints,
        report,
    })
}

/// Run the pipeline named by the configuration.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let command = cfg.command()?;
    let dir = output_dir(cfg, out_dir);
    std::fs::create_dir_all(&dir)?;
    let stem = file_stem(cfg, command);
    let outcome = pipelines::run(cfg, &dir, &stem)?;
    write_outputs(cfg, command, &dir, outcome)
}

/// Load a TOML configuration, or the configuration embedded in a JSON
/// report (which reproduces that report).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let src = std::fs::read_to_string(path)?;
    if src.trim_start().starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(&src).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let c = v
            .get("config")
            .ok_or_else(|| Error::Schema(format!("{}: report has no embedded config", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_value(c.clone()).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    } else {
        ExperimentConfig::parse(&src).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}:\n{m}", path.display())),
            other => other,
        })
    }
}

pub fn run_experiment_file(path: &Path, out_dir: Option<&Path>) -> Result<RunOutput> {
    run_experiment(&load_config(path)?, out_dir)
}

/// Continue a chain from a checkpoint up to `until` (default: the
/// configured number of steps).
pub fn resume(path: &Path, until: Option<u64>, out_dir: Option<&Path>) -> Result<RunOutput> {
    let (header, field) = checkpoint::read(path)?;
    let dir = match out_dir {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&dir)?;
    let stem = format!(
        "{}_resumed",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint")
    );
    let outcome = pipelines::resume_chain(&header, field, until, &dir, &stem)?;
    let report = serde_json::json!({
        "version": REPORT_VERSION,
        "command": "resume",
        "config_hash": header.config_hash,
        "config": header.config,
        "resumed_from": {"path": path.display().to_string(), "step": header.step, "seed_lineage": header.seed_lineage},
        "seeds": outcome.seeds,
        "results": outcome.results,
    });
    let report_path = dir.join(format!("{stem}.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    let mut csv_paths = vec![];
    for t in &outcome.tables {
        let p = dir.join(format!("{stem}_{}.csv", t.name));
        std::fs::write(&p, t.render())?;
        csv_paths.push(p);
    }
    Ok(RunOutput {
        report_path,
        csv_paths,
        checkpoint_paths: outcome.checkpoints,
        report,
    })
}
