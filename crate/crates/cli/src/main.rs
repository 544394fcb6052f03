//! `rcdlms`: generate configurations, run experiments and sweeps.
//!
//! Exit codes: 0 success, 1 validation error, 2 instability, 3 I/O error.

mod commands;
mod failure;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rcdlms::theory::to_db;
use rcdlms::{ModeKind, WeightRule};

use crate::commands::{GenerateArgs, RunOverrides, SweepArgs};
use crate::failure::{CmdResult, Failure};

#[derive(Parser, Debug)]
#[command(name = "rcdlms", version, about = "Reduced-communication diffusion LMS experiments")]
struct Cli {
    /// Worker threads for Monte Carlo trials (0 = all cores).
    #[arg(long, global = true, env = "RCDLMS_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a self-contained experiment configuration and its model manifest.
    Generate(GenerateCmd),
    /// Run one configuration: learning curves, steady state, theory.
    Run(RunCmd),
    /// Run a grid over M and step size in RC mode.
    Sweep(SweepCmd),
    /// Re-run a previous `run` from its manifest and verify artifact hashes.
    Replay(ReplayCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Weights {
    RelativeDegree,
    Uniform,
    Metropolis,
}

impl From<Weights> for WeightRule {
    fn from(w: Weights) -> Self {
        match w {
            Weights::RelativeDegree => WeightRule::RelativeDegree,
            Weights::Uniform => WeightRule::Uniform,
            Weights::Metropolis => WeightRule::Metropolis,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Lms,
    Dlms,
    Rc,
    Pdlms,
}

impl From<Mode> for ModeKind {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Lms => ModeKind::Lms,
            Mode::Dlms => ModeKind::Dlms,
            Mode::Rc => ModeKind::Rc,
            Mode::Pdlms => ModeKind::Pdlms,
        }
    }
}

#[derive(clap::Args, Debug)]
struct GenerateCmd {
    /// Number of nodes.
    #[arg(long = "K", default_value_t = 20)]
    nodes: usize,
    /// Parameter dimension.
    #[arg(long = "L", default_value_t = 4)]
    dimension: usize,
    #[arg(long, default_value_t = 1)]
    degree_min: usize,
    #[arg(long, default_value_t = 7)]
    degree_max: usize,
    /// Target average degree (default: midpoint of the bounds).
    #[arg(long)]
    mean_degree: Option<f64>,
    #[arg(long, value_enum, default_value_t = Weights::RelativeDegree)]
    weights: Weights,
    #[arg(long, default_value_t = 0, value_parser = seed_parser())]
    topology_seed: u64,
    #[arg(long, default_value_t = 1, value_parser = seed_parser())]
    target_seed: u64,
    #[arg(long, default_value_t = 2, value_parser = seed_parser())]
    profile_seed: u64,
    #[arg(long = "mu", default_value_t = 0.01)]
    step_size: f64,
    #[arg(long, default_value_t = 0.5)]
    trace_min: f64,
    #[arg(long, default_value_t = 2.0)]
    trace_max: f64,
    #[arg(long, default_value_t = 0.005)]
    noise_min: f64,
    #[arg(long, default_value_t = 0.02)]
    noise_max: f64,
    /// Eigenvalue spread of each regressor covariance.
    #[arg(long, default_value_t = 2.0)]
    condition: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 500)]
    window: usize,
    #[arg(long, default_value_t = 0, value_parser = seed_parser())]
    master_seed: u64,
    /// Output configuration path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct RunFlags {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// RC budget cap: m_k = min(M, d_k).
    #[arg(long = "M")]
    max_budget: Option<usize>,
    /// PDLMS link probability.
    #[arg(long = "p")]
    link_probability: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_parser = seed_parser())]
    seed: Option<u64>,
}

impl RunFlags {
    fn overrides(&self) -> RunOverrides {
        RunOverrides {
            mode: self.mode.map(Into::into),
            max_budget: self.max_budget,
            link_probability: self.link_probability,
            trials: self.trials,
            iterations: self.iterations,
            window: self.window,
            master_seed: self.seed,
        }
    }
}

#[derive(clap::Args, Debug)]
struct RunCmd {
    #[command(flatten)]
    flags: RunFlags,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct SweepCmd {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Budget caps, e.g. `0,1,2,7` (default: the configuration's M).
    #[arg(long = "M", value_delimiter = ',')]
    budgets: Vec<usize>,
    /// Step sizes, e.g. `0.005,0.01` (default: the configuration's).
    #[arg(long = "mu", value_delimiter = ',')]
    step_sizes: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_parser = seed_parser())]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct ReplayCmd {
    /// `manifest.toml` written by `run`.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the re-run.
    #[arg(long, short)]
    out: PathBuf,
}

/// Seeds are stored as TOML integers, which are signed 64-bit.
fn seed_parser() -> clap::builder::RangedU64ValueParser<u64> {
    clap::value_parser!(u64).range(..=i64::MAX as u64)
}

fn main() -> ExitCode {
    // Usage errors are validation failures (exit 1); clap's default of 2
    // would read as instability.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.kind as u8)
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Generate(g) => {
            let args = GenerateArgs {
                nodes: g.nodes,
                dimension: g.dimension,
                degree_min: g.degree_min,
                degree_max: g.degree_max,
                mean_degree: g.mean_degree,
                weights: g.weights.into(),
                topology_seed: g.topology_seed,
                target_seed: g.target_seed,
                profile_seed: g.profile_seed,
                step_size: g.step_size,
                trace_range: (g.trace_min, g.trace_max),
                noise_range: (g.noise_min, g.noise_max),
                condition: g.condition,
                trials: g.trials,
                window: g.window,
                master_seed: g.master_seed,
                out: g.out,
            };
            for path in commands::generate(&args)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Run(r) => {
            let mut cfg = commands::load(&r.flags.config)?;
            r.flags.overrides().apply(&mut cfg)?;
            let report = commands::run(&cfg, &r.out)?;
            println!("{}", report.label);
            println!(
                "network steady-state MSD: theory {:.3} dB, simulation {:.3} dB ({} trials, {} iterations)",
                to_db(report.steady_theory_network),
                to_db(report.steady_exp_network),
                report.curves.trials,
                report.curves.iterations()
            );
            println!("wrote {}", r.out.display());
            Ok(())
        }
        Command::Sweep(s) => {
            let mut cfg = commands::load(&s.config)?;
            RunOverrides {
                trials: s.trials,
                iterations: s.iterations,
                window: s.window,
                master_seed: s.seed,
                ..RunOverrides::default()
            }
            .apply(&mut cfg)?;
            let budgets = if s.budgets.is_empty() {
                vec![cfg
                    .run
                    .max_budget
                    .ok_or_else(|| Failure::validation("--M is required unless the configuration sets run.max_budget"))?]
            } else {
                s.budgets
            };
            let step_sizes = if s.step_sizes.is_empty() {
                vec![cfg.model.step_size]
            } else {
                s.step_sizes
            };
            let rows = commands::sweep(
                &cfg,
                &SweepArgs {
                    budgets,
                    step_sizes,
                    out: s.out.clone(),
                },
            )?;
            println!("wrote {rows} rows to {}", s.out.join("sweep.csv").display());
            Ok(())
        }
        Command::Replay(r) => {
            let mismatched = commands::replay(&r.manifest, &r.out)?;
            if mismatched.is_empty() {
                println!("all artifacts reproduced bit-exactly");
                Ok(())
            } else {
                Err(Failure::validation(format!("artifacts differ: {}", mismatched.join(", "))))
            }
        }
    }
}
