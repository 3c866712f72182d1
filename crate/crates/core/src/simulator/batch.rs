use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Controller, EpisodeConfig, EpisodeRecord, EpisodeSeries, Simulator};
use crate::analysis::stats::{distribution_stats, DistributionStats, Herald};
use crate::error::{Error, Result};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(master.wrapping_add(mix(index.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

/// Runs `f` inside a dedicated pool of `workers` threads (at least one).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub n_traj: usize,
    pub workers: usize,
    /// Keep full per-cycle rows; only the fidelity series are kept otherwise.
    pub keep_records: bool,
    pub herald: Option<Herald>,
}

impl BatchOptions {
    pub fn new(n_traj: usize, workers: usize) -> Self {
        Self {
            n_traj,
            workers,
            keep_records: true,
            herald: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub master_seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub series: Vec<EpisodeSeries>,
    pub stats: DistributionStats,
}

/// `n_traj` episodes with seeds derived from `cfg.seed`, on a pool of
/// `workers` threads. Results are ordered by trajectory index.
pub fn run_batch(cfg: &EpisodeConfig, controller: &Controller, opts: &BatchOptions) -> Result<BatchResult> {
    if opts.n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    let sim = Simulator::new(cfg.clone())?;
    let master = cfg.seed;
    let keep = opts.keep_records;
    let results: Vec<(Option<EpisodeRecord>, EpisodeSeries)> = with_workers(opts.workers, || {
        (0..opts.n_traj as u64)
            .into_par_iter()
            .map(|i| {
                let rec = sim.run(controller, derive_seed(master, i));
                let series = rec.series();
                (keep.then_some(rec), series)
            })
            .collect()
    })?;
    let (records, series): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let stats = distribution_stats(&series, opts.herald)?;
    Ok(BatchResult {
        master_seed: master,
        records: records.into_iter().flatten().collect(),
        series,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::MeasurementSetup;
    use crate::states::Preset;
    use crate::{FockSpace, Ket};

    fn cfg() -> EpisodeConfig {
        let space = FockSpace::new(16).unwrap();
        let target: Ket = Preset::Benchmark.build(space).unwrap();
        let setup = MeasurementSetup::for_target(&target, None, None).unwrap();
        let mut cfg = EpisodeConfig::new(target, setup);
        cfg.max_cycles = 12;
        cfg.seed = 77;
        cfg
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(5, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(derive_seed(5, 0), derive_seed(6, 0));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }

    #[test]
    fn single_trajectory_equals_episode() {
        let cfg = cfg();
        let ctl = Controller::lyapunov(&cfg.target, &cfg.setup).unwrap();
        let b = run_batch(&cfg, &ctl, &BatchOptions::new(1, 1)).unwrap();
        let direct = Simulator::new(cfg.clone()).unwrap().run(&ctl, derive_seed(cfg.seed, 0));
        assert_eq!(b.records[0], direct);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = cfg();
        let ctl = Controller::lyapunov(&cfg.target, &cfg.setup).unwrap();
        let a = run_batch(&cfg, &ctl, &BatchOptions::new(24, 1)).unwrap();
        let b = run_batch(&cfg, &ctl, &BatchOptions::new(24, 4)).unwrap();
        assert_eq!(a, b);
        assert!(run_batch(&cfg, &ctl, &BatchOptions::new(0, 1)).is_err());
    }
}
