use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phi4lab::cli::{
    exit_code, resume, run_experiment, run_experiment_file, ChainParams, ExperimentConfig, FluctParams,
    FreeEnergyParams, GaussianSectorParams, GreenParams, GroundstateParams, KernelName, RunOutput, SampleParams,
    SpectrumParams, TestFunctionParams, CONFIG_VERSION,
};

#[derive(Parser)]
#[command(name = "phi4lab", version, about = "Focusing Phi^4 measure on the circle")]
struct Cli {
    /// Output directory (default: $PHI4LAB_OUT, else the working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stem for output file names (default: the subcommand name).
    #[arg(long, global = true)]
    name: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long, default_value_t = 10_000)]
    steps: u64,
    #[arg(long, default_value_t = 1_000)]
    burn_in: u64,
    #[arg(long, default_value_t = 1)]
    thin: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, value_enum, default_value = "hmc")]
    kernel: Kern,
    #[arg(long, default_value_t = 8)]
    n_leapfrog: usize,
    #[arg(long, default_value_t = 0.15)]
    step_size: f64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Kern {
    Hmc,
    Pcn,
}

impl ChainArgs {
    fn params(&self) -> ChainParams {
        ChainParams {
            steps: self.steps,
            burn_in: self.burn_in,
            thin: self.thin,
            seeds: None,
            seed: self.seed,
            chains: self.chains,
            kernel: match self.kernel {
                Kern::Hmc => KernelName::Hmc,
                Kern::Pcn => KernelName::Pcn,
            },
            n_leapfrog: self.n_leapfrog,
            step_size: self.step_size,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Constrained ground state on a torus.
    Groundstate {
        #[arg(long)]
        d: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        half_length: f64,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        #[arg(long)]
        no_profile: bool,
    },
    /// Low spectrum and restricted Rayleigh quotients of the linearized operators.
    Spectrum {
        #[arg(long)]
        d: f64,
        #[arg(long = "l", value_delimiter = ',', required = true)]
        l_values: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        points_per_unit: f64,
        #[arg(long, default_value_t = 8)]
        k: usize,
    },
    /// Green's function of the projected real-sector operator.
    Green {
        #[arg(long)]
        d: f64,
        #[arg(long = "l", value_delimiter = ',', required = true)]
        l_values: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        points_per_unit: f64,
    },
    /// Draws from the Gaussian normal sector.
    GaussianSector {
        #[arg(long)]
        d: f64,
        #[arg(long = "l", value_delimiter = ',', required = true)]
        l_values: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        points_per_unit: f64,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        with_weight: bool,
    },
    /// Run Markov chains for the constrained measure and checkpoint them.
    Sample {
        #[arg(long)]
        l: f64,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, default_value_t = 0)]
        checkpoint_every: u64,
    },
    /// Fluctuation statistics of chain samples around the soliton manifold.
    Fluct {
        #[arg(long)]
        d: f64,
        #[arg(long = "l", value_delimiter = ',', required = true)]
        l_values: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        points_per_unit: f64,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 1e3)]
        min_ess: f64,
    },
    /// Free energy by a ball probability and thermodynamic integration.
    FreeEnergy {
        #[arg(long)]
        l: f64,
        #[arg(long = "d", value_delimiter = ',', required = true)]
        d_values: Vec<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 20_000)]
        steps: u64,
        #[arg(long, default_value_t = 1_000)]
        burn_in: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        ball_draws: usize,
    },
    /// Run the pipeline described by a TOML config (or a JSON report).
    #[command(name = "run_experiment", alias = "run", alias = "run-experiment")]
    RunExperiment { config: PathBuf },
    /// Continue a chain from a checkpoint file.
    Resume {
        checkpoint: PathBuf,
        /// Stop at this step instead of the configured total.
        #[arg(long)]
        until: Option<u64>,
    },
}

fn base(name: Option<String>) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION.to_string(),
        name,
        ..Default::default()
    }
}

fn execute(cli: Cli) -> phi4lab::Result<RunOutput> {
    let out = cli.out.as_deref();
    let mut cfg = base(cli.name);
    match cli.command {
        Command::RunExperiment { config } => return run_experiment_file(&config, out),
        Command::Resume { checkpoint, until } => return resume(&checkpoint, until, out),
        Command::Groundstate {
            d,
            n,
            half_length,
            tolerance,
            max_iters,
            no_profile,
        } => {
            cfg.groundstate = Some(GroundstateParams {
                d,
                n,
                half_length,
                tolerance,
                max_iters,
                write_profile: !no_profile,
            })
        }
        Command::Spectrum {
            d,
            l_values,
            points_per_unit,
            k,
        } => {
            cfg.spectrum = Some(SpectrumParams {
                d,
                l_values,
                points_per_unit,
                k,
            })
        }
        Command::Green {
            d,
            l_values,
            points_per_unit,
        } => {
            cfg.green = Some(GreenParams {
                d,
                l_values,
                points_per_unit,
            })
        }
        Command::GaussianSector {
            d,
            l_values,
            points_per_unit,
            draws,
            seed,
            with_weight,
        } => {
            let mut p: GaussianSectorParams = serde_json::from_value(serde_json::json!({
                "d": d, "l_values": l_values, "points_per_unit": points_per_unit, "draws": draws, "seed": seed,
            }))
            .expect("defaults fill the remaining fields");
            p.with_weight = with_weight;
            cfg.gaussian_sector = Some(p);
        }
        Command::Sample {
            l,
            d,
            n,
            chain,
            checkpoint_every,
        } => {
            cfg.sample = Some(SampleParams {
                l,
                d,
                n,
                chain: chain.params(),
                checkpoint_every,
            })
        }
        Command::Fluct {
            d,
            l_values,
            points_per_unit,
            chain,
            delta,
            min_ess,
        } => {
            cfg.fluct = Some(FluctParams {
                d,
                l_values,
                points_per_unit,
                chain: chain.params(),
                delta,
                test_function: TestFunctionParams::default(),
                min_ess,
                shell_epsilon: None,
            })
        }
        Command::FreeEnergy {
            l,
            d_values,
            n,
            lambda_grid,
            steps,
            burn_in,
            seed,
            ball_draws,
        } => {
            let mut p: FreeEnergyParams = serde_json::from_value(serde_json::json!({
                "l": l, "d_values": d_values, "n": n, "steps": steps, "burn_in": burn_in,
                "seed": seed, "ball_draws": ball_draws,
            }))
            .expect("defaults fill the remaining fields");
            if let Some(g) = lambda_grid {
                p.lambda_grid = g;
            }
            cfg.free_energy = Some(p);
        }
    }
    run_experiment(&cfg, out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(out) => {
            println!("{}", out.report_path.display());
            for p in out.csv_paths.iter().chain(&out.checkpoint_paths) {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
