//! Subcommand implementations. Each resolves the configuration, runs the
//! library operation and writes its artifacts.

use std::io;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use fockfb::analysis::{enumerate_tree, run_sweep, tree_report, DistributionStats, SweepSpec};
use fockfb::bridge::{serve_lines, serve_tcp, Session};
use fockfb::filter::init_episode;
use fockfb::policy::{read_policy, PolicyManifest};
use fockfb::simulator::{
    derive_seed, free_evolution_reference, run_batch, with_workers, BatchOptions, Controller, EpisodeConfig,
    Simulator, TerminalKind,
};
use fockfb::{CavityState, Displacer};

use crate::config::{ControllerKind, ExperimentConfig};
use crate::output::{num, ArtifactWriter};

/// Desk-scale noisy run: trajectories × cycles.
pub const NOISE_DESK: (usize, usize) = (300, 500);
/// Full-scale noisy run.
pub const NOISE_FULL: (usize, usize) = (3000, 2000);

#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Globals {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
    }
}

fn writer(cfg: &ExperimentConfig) -> Result<ArtifactWriter> {
    ArtifactWriter::new(&cfg.output.dir, cfg.hash(), cfg.run.seed)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    /// Canonical configuration as hashed.
    config: ExperimentConfig,
    files: Vec<String>,
}

fn write_manifest(w: &mut ArtifactWriter, cfg: &ExperimentConfig, command: &str) -> Result<()> {
    let mut canon = cfg.clone();
    canon.run.workers = 0;
    canon.output.dir = PathBuf::new();
    let files = w
        .written()
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    w.json(
        "manifest.json",
        "manifest",
        &Manifest {
            command,
            config: canon,
            files,
        },
    )?;
    Ok(())
}

fn status_name(k: TerminalKind) -> &'static str {
    match k {
        TerminalKind::Completed => "completed",
        TerminalKind::GuardStop => "guard_stop",
        TerminalKind::NumericalFailure => "numerical_failure",
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub noise: bool,
    pub full: bool,
    pub n_traj: Option<usize>,
    pub cycles: Option<usize>,
}

impl RunArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if self.noise {
            let (n, c) = if self.full { NOISE_FULL } else { NOISE_DESK };
            cfg.noise.enabled = true;
            cfg.run.n_traj = n;
            cfg.episode.max_cycles = c;
        }
        if let Some(n) = self.n_traj {
            cfg.run.n_traj = n;
        }
        if let Some(c) = self.cycles {
            cfg.episode.max_cycles = c;
        }
    }
}

/// Batch run with summary, per-cycle bands, per-trajectory finals and a few
/// full trajectory logs.
pub fn cmd_run(cfg: &ExperimentConfig, command: &str) -> Result<DistributionStats> {
    let ep = cfg.episode_config()?;
    let controller = cfg.controller(&ep)?;
    let mut opts = BatchOptions::new(cfg.run.n_traj, cfg.run.workers);
    opts.keep_records = false;
    let batch = run_batch(&ep, &controller, &opts)?;
    let mut w = writer(cfg)?;

    let reference = match &ep.noise {
        Some(noise) => Some(free_evolution_reference(&ep.target, noise, ep.max_cycles)?),
        None => None,
    };
    let mut cols = header(&[
        "cycle",
        "true_mean",
        "true_median",
        "true_p25",
        "true_p75",
        "filter_mean",
        "filter_median",
        "filter_p25",
        "filter_p75",
    ]);
    if reference.is_some() {
        cols.push("free_decay_fidelity".into());
    }
    let rows = batch.stats.per_cycle.iter().map(|c| {
        let (t, f) = (&c.true_fidelity, &c.filter_fidelity);
        let mut row = vec![c.cycle.to_string()];
        row.extend([t.mean, t.median, t.p25, t.p75, f.mean, f.median, f.p25, f.p75].map(num));
        if let Some(r) = &reference {
            row.push(r.get(c.cycle).map_or_else(String::new, |v| num(*v)));
        }
        row
    });
    w.csv("per_cycle.csv", &cols, rows)?;

    let finals = batch.series.iter().enumerate().map(|(i, s)| {
        vec![
            i.to_string(),
            derive_seed(ep.seed, i as u64).to_string(),
            status_name(s.status).into(),
            (s.true_fidelity.len() - 1).to_string(),
            num(*s.true_fidelity.last().unwrap()),
            num(*s.filter_fidelity.last().unwrap()),
            num(s.final_subspace_population),
            s.jumps.to_string(),
        ]
    });
    w.csv(
        "final.csv",
        &header(&[
            "trajectory",
            "seed",
            "status",
            "last_cycle",
            "final_true_fidelity",
            "final_filter_fidelity",
            "final_subspace_population",
            "jumps",
        ]),
        finals,
    )?;

    let sim = Simulator::new(ep.clone())?;
    let logged = cfg.run.log_trajectories.min(cfg.run.n_traj);
    let mut rows = Vec::new();
    for i in 0..logged {
        let rec = sim.run(&controller, derive_seed(ep.seed, i as u64));
        for r in &rec.rows {
            let outcome = |o: Option<fockfb::measurement::Outcome>| o.map_or_else(String::new, |o| o.to_string());
            rows.push(vec![
                i.to_string(),
                r.cycle.to_string(),
                num(r.alpha_re),
                num(r.alpha_im),
                outcome(r.true_outcome),
                outcome(r.reported_outcome),
                num(r.filter_fidelity),
                num(r.true_fidelity),
                u8::from(r.jump).to_string(),
                num(r.subspace_populations[rec.target_subspace]),
                num(r.filter_truth_gap),
            ]);
        }
    }
    w.csv(
        "trajectories.csv",
        &header(&[
            "trajectory",
            "cycle",
            "alpha_re",
            "alpha_im",
            "true_outcome",
            "reported_outcome",
            "filter_fidelity",
            "true_fidelity",
            "jump",
            "target_subspace_population",
            "filter_truth_gap",
        ]),
        rows,
    )?;
    w.json("summary.json", "batch_summary", &batch.stats)?;
    write_manifest(&mut w, cfg, command)?;
    Ok(batch.stats)
}

/// Starting state of trees: the configured initial state or the coherent
/// guess.
fn tree_start(ep: &EpisodeConfig) -> Result<CavityState> {
    Ok(match &ep.initial {
        Some(k) => CavityState::Pure(k.clone()),
        None => init_episode(&ep.target, &Displacer::new(ep.space))?.0.state().clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeSummary {
    pub depth: usize,
    pub leaves: usize,
    pub total_probability: f64,
    pub pruned_branches: usize,
    pub pruned_mass: f64,
    /// Probability-weighted mean fidelity after each measurement (index 0 is
    /// after the adjustment).
    pub mean_fidelity: Vec<f64>,
}

pub fn cmd_tree(cfg: &ExperimentConfig, depth: usize) -> Result<TreeSummary> {
    let ep = cfg.episode_config()?;
    let controller = cfg.controller(&ep)?;
    let start = tree_start(&ep)?;
    let tree = with_workers(cfg.run.workers, || {
        enumerate_tree(&start, &ep.target, &controller, &ep.setup, depth)
    })??;
    let mut w = writer(cfg)?;
    let mut cols = header(&["outcomes", "probability", "log10_probability"]);
    cols.extend((0..=depth).map(|k| format!("fidelity_{k}")));
    cols.extend((0..=depth).map(|k| format!("alpha_re_{k}")));
    cols.extend((0..=depth).map(|k| format!("alpha_im_{k}")));
    let rows = tree_report(&tree).into_iter().map(|r| {
        let mut row = vec![r.outcomes, num(r.probability), num(r.log10_probability)];
        row.extend(r.fidelities.iter().map(|v| num(*v)));
        row.extend(r.alphas.iter().map(|a| num(a.re)));
        row.extend(r.alphas.iter().map(|a| num(a.im)));
        row
    });
    w.csv("tree.csv", &cols, rows)?;
    let summary = TreeSummary {
        depth,
        leaves: tree.leaves.len(),
        total_probability: tree.total_probability(),
        pruned_branches: tree.pruned.len(),
        pruned_mass: tree.pruned_mass(),
        mean_fidelity: (0..=depth).map(|k| tree.mean_fidelity(k)).collect(),
    };
    w.json("tree_summary.json", "tree_summary", &summary)?;
    write_manifest(&mut w, cfg, "tree")?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub ratios: Vec<f64>,
    pub eps: Vec<f64>,
}

pub fn cmd_sweep(cfg: &ExperimentConfig, args: &SweepArgs) -> Result<fockfb::analysis::SweepGrid> {
    let ep = cfg.episode_config()?;
    let controller = cfg.controller(&ep)?;
    let spec = SweepSpec {
        ratios: args.ratios.clone(),
        eps_probe: args.eps.clone(),
        t_cycle: cfg.noise.t_cycle,
        n_traj: cfg.run.n_traj,
        workers: cfg.run.workers,
    };
    let grid = run_sweep(&spec, &ep, &controller)?;
    let mut w = writer(cfg)?;
    let rows = grid.cells.iter().map(|c| {
        vec![
            num(c.ratio),
            num(c.eps_probe),
            num(c.max_median),
            num(c.max_mean),
            num(c.final_median),
            num(c.final_mean),
        ]
    });
    w.csv(
        "sweep.csv",
        &header(&[
            "t_cycle_over_t_cav",
            "eps_probe",
            "max_median_fidelity",
            "max_mean_fidelity",
            "final_median_fidelity",
            "final_mean_fidelity",
        ]),
        rows,
    )?;
    w.json("sweep.json", "sweep_grid", &grid)?;
    write_manifest(&mut w, cfg, "sweep")?;
    Ok(grid)
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationPoint {
    pub alpha_max: f64,
    pub median_final_fidelity: f64,
    pub mean_final_fidelity: f64,
    pub p25: f64,
    pub p75: f64,
}

/// Grid search of the Lyapunov step bound by median final fidelity.
pub fn cmd_calibrate(cfg: &ExperimentConfig, grid: &[f64]) -> Result<Vec<CalibrationPoint>> {
    if grid.is_empty() {
        bail!("alpha_max grid is empty");
    }
    let ep = cfg.episode_config()?;
    let mut opts = BatchOptions::new(cfg.run.n_traj, cfg.run.workers);
    opts.keep_records = false;
    let mut points = Vec::new();
    for &a in grid {
        let ctl = Controller::Lyapunov(fockfb::simulator::LyapunovController::new(&ep.target, &ep.setup, a)?);
        let s = run_batch(&ep, &ctl, &opts)?.stats.final_true_fidelity;
        points.push(CalibrationPoint {
            alpha_max: a,
            median_final_fidelity: s.median,
            mean_final_fidelity: s.mean,
            p25: s.p25,
            p75: s.p75,
        });
    }
    let mut w = writer(cfg)?;
    let rows = points
        .iter()
        .map(|p| [p.alpha_max, p.median_final_fidelity, p.mean_final_fidelity, p.p25, p.p75].map(num).to_vec());
    w.csv(
        "calibration.csv",
        &header(&["alpha_max", "median_final_fidelity", "mean_final_fidelity", "p25", "p75"]),
        rows,
    )?;
    let best = points
        .iter()
        .max_by(|a, b| a.median_final_fidelity.total_cmp(&b.median_final_fidelity))
        .cloned();
    w.json("calibration.json", "lyapunov_calibration", &(&points, best))?;
    write_manifest(&mut w, cfg, "calibrate-lyapunov")?;
    Ok(points)
}

pub fn cmd_reference(cfg: &ExperimentConfig, cycles: usize) -> Result<Vec<f64>> {
    let ep = cfg.episode_config()?;
    let noise = cfg.noise.params()?;
    let curve = free_evolution_reference(&ep.target, &noise, cycles)?;
    let mut w = writer(cfg)?;
    let rows = curve
        .iter()
        .enumerate()
        .map(|(k, f)| vec![k.to_string(), num(k as f64 * noise.t_cycle), num(*f)]);
    w.csv("reference.csv", &header(&["cycle", "time_s", "fidelity"]), rows)?;
    write_manifest(&mut w, cfg, "reference")?;
    Ok(curve)
}

/// Evaluates a trained policy; the manifest, when given, must match the
/// weight file.
pub fn cmd_eval_policy(cfg: &mut ExperimentConfig, weights: &Path, manifest: Option<&Path>) -> Result<DistributionStats> {
    let bytes = std::fs::read(weights).with_context(|| format!("reading {}", weights.display()))?;
    let net = read_policy(&bytes)?;
    if let Some(m) = manifest {
        PolicyManifest::load(m)?.check(&net, &bytes)?;
    }
    cfg.controller.kind = ControllerKind::Policy;
    cfg.controller.weights = Some(weights.to_path_buf());
    cmd_run(cfg, "eval-policy")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Stdio,
    Tcp,
}

pub fn cmd_serve(cfg: &ExperimentConfig, transport: Transport, addr: &str) -> Result<()> {
    let ep = cfg.episode_config()?;
    match transport {
        Transport::Stdio => {
            let mut session = Session::new(ep)?;
            serve_lines(&mut session, io::stdin().lock(), io::stdout().lock())?;
        }
        Transport::Tcp => {
            serve_tcp(addr, &ep, None, |a| eprintln!("listening on {a}"))?;
        }
    }
    Ok(())
}
