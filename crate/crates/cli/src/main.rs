use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use fockfb_cli::commands::{self, Globals, RunArgs, SweepArgs, Transport};
use fockfb_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "fockfb", version, about = "Measurement-based feedback preparation of cavity Fock-state superpositions")]
struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. `--set noise.enabled=true`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    overrides: Vec<String>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BatchFlags {
    /// Enable the reference noise model and the long stabilization run.
    #[arg(long)]
    noise: bool,
    /// With --noise: 3000 trajectories of 2000 cycles instead of 300 of 500.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    n_traj: Option<usize>,
    /// Feedback cycles per episode.
    #[arg(long)]
    cycles: Option<usize>,
}

impl BatchFlags {
    fn args(&self) -> RunArgs {
        RunArgs {
            noise: self.noise,
            full: self.full,
            n_traj: self.n_traj,
            cycles: self.cycles,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Stdio,
    Tcp,
}

#[derive(Subcommand)]
enum Command {
    /// Batch of episodes with summary statistics.
    Run(BatchFlags),
    /// Exhaustive outcome tree of a noiseless run.
    Tree {
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
    /// Grid over cavity decay ratio and probe error.
    Sweep {
        /// Comma-separated t_cycle/t_cav values.
        #[arg(long, value_delimiter = ',', default_value = "0,0.0001,0.001,0.01")]
        ratios: Vec<f64>,
        /// Comma-separated effective probe errors.
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.05,0.1")]
        eps: Vec<f64>,
        #[arg(long)]
        n_traj: Option<usize>,
        #[arg(long)]
        cycles: Option<usize>,
    },
    /// Median final fidelity of the Lyapunov controller over a grid of step bounds.
    CalibrateLyapunov {
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.5")]
        grid: Vec<f64>,
        #[arg(long)]
        n_traj: Option<usize>,
    },
    /// Environment server for external trainers.
    Serve {
        #[arg(long, value_enum, default_value = "stdio")]
        transport: TransportArg,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
    /// Batch evaluation of a trained policy.
    EvalPolicy {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        batch: BatchFlags,
    },
    /// Free decay of the perfectly prepared target.
    Reference {
        #[arg(long, default_value_t = 2000)]
        cycles: usize,
    },
    /// Print the resolved configuration and its hash.
    Config,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Globals {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out.clone(),
    }
    .apply(&mut cfg);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli)?;
    match cli.command {
        Command::Run(b) => {
            b.args().apply(&mut cfg);
            let s = commands::cmd_run(&cfg, "run")?;
            report_batch(&cfg, &s);
        }
        Command::Tree { depth } => {
            let s = commands::cmd_tree(&cfg, depth)?;
            println!(
                "tree depth {}: {} leaves, total probability {:.12}, pruned mass {:.3e}, mean final fidelity {:.6}",
                s.depth,
                s.leaves,
                s.total_probability,
                s.pruned_mass,
                s.mean_fidelity.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Sweep {
            ratios,
            eps,
            n_traj,
            cycles,
        } => {
            RunArgs {
                n_traj,
                cycles,
                ..RunArgs::default()
            }
            .apply(&mut cfg);
            let g = commands::cmd_sweep(&cfg, &SweepArgs { ratios, eps })?;
            for c in &g.cells {
                println!(
                    "ratio {:<8} eps {:<6} max median {:.4} max mean {:.4}",
                    c.ratio, c.eps_probe, c.max_median, c.max_mean
                );
            }
        }
        Command::CalibrateLyapunov { grid, n_traj } => {
            RunArgs {
                n_traj,
                ..RunArgs::default()
            }
            .apply(&mut cfg);
            for p in commands::cmd_calibrate(&cfg, &grid)? {
                println!(
                    "alpha_max {:<5} median {:.4} mean {:.4}",
                    p.alpha_max, p.median_final_fidelity, p.mean_final_fidelity
                );
            }
        }
        Command::Serve { transport, addr } => {
            let t = match transport {
                TransportArg::Stdio => Transport::Stdio,
                TransportArg::Tcp => Transport::Tcp,
            };
            commands::cmd_serve(&cfg, t, &addr)?;
        }
        Command::EvalPolicy {
            weights,
            manifest,
            batch,
        } => {
            batch.args().apply(&mut cfg);
            let s = commands::cmd_eval_policy(&mut cfg, &weights, manifest.as_deref())?;
            report_batch(&cfg, &s);
        }
        Command::Reference { cycles } => {
            let c = commands::cmd_reference(&cfg, cycles)?;
            println!("free decay fidelity after {cycles} cycles: {:.6}", c.last().unwrap());
        }
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            println!("# config_hash = {}", cfg.hash());
        }
    }
    Ok(())
}

fn report_batch(cfg: &ExperimentConfig, s: &fockfb::analysis::DistributionStats) {
    let f = &s.final_true_fidelity;
    println!(
        "{} trajectories: final fidelity median {:.4} mean {:.4} (p25 {:.4}, p75 {:.4}); wrote {}",
        s.records,
        f.median,
        f.mean,
        f.p25,
        f.p75,
        cfg.output.dir.display()
    );
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
