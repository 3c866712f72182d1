//! Per-cycle and terminal statistics over many episodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{EpisodeSeries, TerminalKind};

/// Linear-interpolation percentile of sorted data, `q ∈ [0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            count: n,
            mean,
            median: percentile_sorted(&sorted, 0.5),
            p25: percentile_sorted(&sorted, 0.25),
            p75: percentile_sorted(&sorted, 0.75),
            min: sorted.first().copied().unwrap_or(f64::NAN),
            max: sorted.last().copied().unwrap_or(f64::NAN),
            std: var.sqrt(),
        }
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub cycle: usize,
    pub true_fidelity: Summary,
    pub filter_fidelity: Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Herald {
    /// Cycle at which the filter fidelity is inspected.
    pub cycle: usize,
    /// Records whose filter fidelity at `cycle` is below this are dropped.
    pub cut: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub completed: usize,
    pub guard_stop: usize,
    pub numerical_failure: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub records: usize,
    pub heralded_out: usize,
    pub per_cycle: Vec<CycleStats>,
    pub final_true_fidelity: Summary,
    pub final_filter_fidelity: Summary,
    pub final_subspace_population: Summary,
    pub final_histogram: Vec<HistogramBin>,
    pub statuses: StatusCounts,
    pub mean_jumps: f64,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Value of a series at `cycle`, carrying the last entry forward past an
/// early stop.
fn at(series: &[f64], cycle: usize) -> f64 {
    series.get(cycle).or(series.last()).copied().unwrap_or(f64::NAN)
}

fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lo: i as f64 / HISTOGRAM_BINS as f64,
            hi: (i + 1) as f64 / HISTOGRAM_BINS as f64,
            count: 0,
        })
        .collect();
    for &v in values {
        let i = ((v * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        bins[i].count += 1;
    }
    bins
}

pub fn distribution_stats(series: &[EpisodeSeries], herald: Option<Herald>) -> Result<DistributionStats> {
    let kept: Vec<&EpisodeSeries> = series
        .iter()
        .filter(|s| herald.is_none_or(|h| at(&s.filter_fidelity, h.cycle) >= h.cut))
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidParameter("no records to summarize".into()));
    }
    let cycles = kept.iter().map(|s| s.true_fidelity.len()).max().unwrap_or(0);
    let per_cycle = (0..cycles)
        .map(|k| {
            let t: Vec<f64> = kept.iter().map(|s| at(&s.true_fidelity, k)).collect();
            let f: Vec<f64> = kept.iter().map(|s| at(&s.filter_fidelity, k)).collect();
            CycleStats {
                cycle: k,
                true_fidelity: Summary::of(&t),
                filter_fidelity: Summary::of(&f),
            }
        })
        .collect();
    let final_true: Vec<f64> = kept.iter().map(|s| at(&s.true_fidelity, usize::MAX)).collect();
    let final_filter: Vec<f64> = kept.iter().map(|s| at(&s.filter_fidelity, usize::MAX)).collect();
    let final_sub: Vec<f64> = kept.iter().map(|s| s.final_subspace_population).collect();
    let mut statuses = StatusCounts::default();
    for s in &kept {
        match s.status {
            TerminalKind::Completed => statuses.completed += 1,
            TerminalKind::GuardStop => statuses.guard_stop += 1,
            TerminalKind::NumericalFailure => statuses.numerical_failure += 1,
        }
    }
    Ok(DistributionStats {
        records: kept.len(),
        heralded_out: series.len() - kept.len(),
        per_cycle,
        final_true_fidelity: Summary::of(&final_true),
        final_filter_fidelity: Summary::of(&final_filter),
        final_subspace_population: Summary::of(&final_sub),
        final_histogram: histogram(&final_true),
        statuses,
        mean_jumps: kept.iter().map(|s| s.jumps as f64).sum::<f64>() / kept.len() as f64,
    })
}
