//! Pseudo-random uniform baseline: the reference an unbiased generator sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CellStats, EntropyBase, Histogram, StatsError};

/// Draw `n_runs` histograms of `n_samples` uniform integers in 1..=k and
/// compute full statistics for each at T = 1.
///
/// Run `i` uses ChaCha8 seeded with `seed` on stream `i`, so any run can be
/// reproduced alone or in parallel.
pub fn baseline_uniform_runs(k: u64, n_samples: u64, n_runs: u64, seed: u64) -> Result<Vec<CellStats>, StatsError> {
    if n_samples == 0 {
        return Err(StatsError::EmptyCell);
    }
    (0..n_runs)
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run);
            let mut hist = Histogram::new(k)?;
            for _ in 0..n_samples {
                hist.record_value(rng.random_range(1..=k) as i64);
            }
            CellStats::compute(&hist, 1.0, EntropyBase::default())
        })
        .collect()
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub runs: usize,
    pub p_value: MeanStd,
    pub cramers_v: MeanStd,
    pub randomness_index: MeanStd,
}

pub fn summarize_baseline(runs: &[CellStats]) -> Option<BaselineSummary> {
    Some(BaselineSummary {
        runs: runs.len(),
        p_value: MeanStd::of(runs.iter().map(|s| s.p_value))?,
        cramers_v: MeanStd::of(runs.iter().map(|s| s.cramers_v))?,
        randomness_index: MeanStd::of(runs.iter().map(|s| s.randomness_index))?,
    })
}
