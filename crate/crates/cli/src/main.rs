mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::{BasisArg, SampleMode, Status};

pub const VERSION: &str = env!("GMFG_VERSION");

/// Graphon mean field game experiments.
#[derive(Parser)]
#[command(name = "gmfg", version = VERSION)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override such as `solver.rank=3`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the equilibrium equations and write the solution directory.
    Solve,
    /// Solve, then simulate the agent population on a sampled network.
    Simulate,
    /// Size sweep of simulated relative errors.
    Sweep,
    /// Eigenvalues, eigen residuals and the Σλ² gap of a graphon.
    Spectrum {
        #[arg(long)]
        graphon: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, default_value_t = 1024)]
        grid: usize,
    },
    /// Sample a graph from a graphon.
    SampleGraph {
        #[arg(long)]
        graphon: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        nodes: usize,
        #[arg(long, value_enum, default_value_t = SampleMode::Simple)]
        mode: SampleMode,
    },
    /// Fit a finite-rank spectral decomposition on a midpoint grid.
    Fit {
        #[arg(long)]
        graphon: Option<PathBuf>,
        #[arg(long, default_value_t = 300)]
        grid: usize,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, value_enum, default_value_t = BasisArg::Cosine)]
        basis: BasisArg,
        #[arg(long, default_value_t = gmfg_core::graphon::DEFAULT_COSINE_MODES)]
        modes: usize,
    },
}

fn load_config(cli: &Cli) -> Result<config::ExperimentConfig> {
    let path = cli.config.as_ref().context("this command needs --config <path>")?;
    let mut cfg = config::load(path, &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&config::ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// `--graphon` when given, else the config's graphon section.
fn graphon_input(cli: &Cli, path: &Option<PathBuf>) -> Result<Option<gmfg_core::graphon::Graphon>> {
    match (path, &cli.config) {
        (Some(p), _) => Ok(Some(commands::read_graphon(p)?)),
        (None, Some(_)) => Ok(load_config(cli)?.graphon),
        (None, None) => Ok(None),
    }
}

fn run(cli: &Cli) -> Result<Status> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Cmd::Solve | Cmd::Simulate | Cmd::Sweep => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg));
            match cli.command {
                Cmd::Solve => commands::solve(&cfg, &out),
                Cmd::Simulate => commands::simulate_cmd(&cfg, &out),
                _ => commands::sweep(&cfg, &out),
            }
        }
        Cmd::Spectrum { graphon, rank, grid } => {
            let g = graphon_input(cli, graphon)?.context("spectrum needs --graphon or a config with a `graphon` section")?;
            commands::spectrum(&g, *rank, *grid, cli.out.as_deref())?;
            Ok(Status::Converged)
        }
        Cmd::SampleGraph { graphon, nodes, mode } => {
            let g = graphon_input(cli, graphon)?;
            let out = out_dir(cli, None);
            commands::sample_graph(g.as_ref(), *nodes, *mode, cli.seed.unwrap_or(0), &out)?;
            Ok(Status::Converged)
        }
        Cmd::Fit { graphon, grid, rank, basis, modes } => {
            let g = graphon_input(cli, graphon)?.context("fit needs --graphon or a config with a `graphon` section")?;
            commands::fit(&g, *grid, *rank, *basis, *modes, cli.out.as_deref())?;
            Ok(Status::Converged)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Status::Converged) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: the solver did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
