//! Noise grids over cavity decay and effective probe error.

use serde::{Deserialize, Serialize};

use crate::channels::NoiseParams;
use crate::error::{Error, Result};
use crate::simulator::{run_batch, BatchOptions, Controller, EpisodeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// `t_cycle / t_cav` values; zero means no decay.
    pub ratios: Vec<f64>,
    /// Effective probe error, used as the flip probability of both outcomes.
    pub eps_probe: Vec<f64>,
    pub t_cycle: f64,
    pub n_traj: usize,
    pub workers: usize,
}

impl SweepSpec {
    /// Noise of one cell, or `None` for the noiseless corner.
    pub fn cell_noise(&self, ratio: f64, eps: f64) -> Result<Option<NoiseParams>> {
        if ratio == 0.0 && eps == 0.0 {
            return Ok(None);
        }
        let t_cav = if ratio == 0.0 { f64::INFINITY } else { self.t_cycle / ratio };
        NoiseParams::new(t_cav, self.t_cycle, 0.0, 0.0, eps).map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub ratio: f64,
    pub eps_probe: f64,
    /// Largest per-cycle median of the true fidelity.
    pub max_median: f64,
    /// Largest per-cycle mean of the true fidelity.
    pub max_mean: f64,
    pub final_median: f64,
    pub final_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub ratios: Vec<f64>,
    pub eps_probe: Vec<f64>,
    /// Row-major over `(ratio, eps_probe)`.
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, ratio_index: usize, eps_index: usize) -> &SweepCell {
        &self.cells[ratio_index * self.eps_probe.len() + eps_index]
    }
}

/// Runs one batch per cell, every cell with the same master seed.
pub fn run_sweep(spec: &SweepSpec, cfg: &EpisodeConfig, controller: &Controller) -> Result<SweepGrid> {
    if spec.ratios.is_empty() || spec.eps_probe.is_empty() {
        return Err(Error::InvalidParameter("sweep axes must be nonempty".into()));
    }
    let mut opts = BatchOptions::new(spec.n_traj, spec.workers);
    opts.keep_records = false;
    let mut cells = Vec::with_capacity(spec.ratios.len() * spec.eps_probe.len());
    for &ratio in &spec.ratios {
        for &eps in &spec.eps_probe {
            let mut cell_cfg = cfg.clone();
            cell_cfg.noise = spec.cell_noise(ratio, eps)?;
            let stats = run_batch(&cell_cfg, controller, &opts)?.stats;
            let max_of = |f: &dyn Fn(&crate::analysis::stats::CycleStats) -> f64| {
                stats.per_cycle.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
            };
            cells.push(SweepCell {
                ratio,
                eps_probe: eps,
                max_median: max_of(&|c| c.true_fidelity.median),
                max_mean: max_of(&|c| c.true_fidelity.mean),
                final_median: stats.final_true_fidelity.median,
                final_mean: stats.final_true_fidelity.mean,
            });
        }
    }
    Ok(SweepGrid {
        ratios: spec.ratios.clone(),
        eps_probe: spec.eps_probe.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::MeasurementSetup;
    use crate::states::Preset;
    use crate::{FockSpace, Ket};

    fn cfg() -> EpisodeConfig {
        let target: Ket = Preset::Benchmark.build(FockSpace::new(16).unwrap()).unwrap();
        let setup = MeasurementSetup::for_target(&target, None, None).unwrap();
        let mut cfg = EpisodeConfig::new(target, setup);
        cfg.max_cycles = 15;
        cfg.seed = 4;
        cfg
    }

    fn spec(ratios: Vec<f64>, eps: Vec<f64>) -> SweepSpec {
        SweepSpec {
            ratios,
            eps_probe: eps,
            t_cycle: 1e-6,
            n_traj: 40,
            workers: 2,
        }
    }

    #[test]
    fn zero_noise_cell_matches_noiseless_batch() {
        let cfg = cfg();
        let ctl = Controller::lyapunov(&cfg.target, &cfg.setup).unwrap();
        let grid = run_sweep(&spec(vec![0.0], vec![0.0]), &cfg, &ctl).unwrap();
        let b = run_batch(&cfg, &ctl, &BatchOptions::new(40, 1)).unwrap();
        assert_eq!(grid.cells[0].final_mean, b.stats.final_true_fidelity.mean);
    }

    #[test]
    fn cells_are_bounded_and_reproducible() {
        let cfg = cfg();
        let ctl = Controller::lyapunov(&cfg.target, &cfg.setup).unwrap();
        let s = spec(vec![1e-4, 1e-3], vec![0.0, 0.05]);
        let a = run_sweep(&s, &cfg, &ctl).unwrap();
        let mut s1 = s.clone();
        s1.workers = 1;
        assert_eq!(a, run_sweep(&s1, &cfg, &ctl).unwrap());
        for c in &a.cells {
            for v in [c.max_median, c.max_mean, c.final_median, c.final_mean] {
                assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
        assert!(run_sweep(&spec(vec![], vec![0.0]), &cfg, &ctl).is_err());
    }
}
