//! Statistical battery over per-cell histograms.
//!
//! Conventions fixed here:
//! - σ is the population standard deviation (divisor N) of the in-range values.
//! - Entropy uses base 2 with the usual minus sign, normalized by the log of
//!   the number of distinct observed values (switchable to the range size).
//! - The range term of the randomness index is a natural logarithm.
//! - Cramér's V is the one-way goodness-of-fit form `sqrt(χ² / (N (k-1)))`.
//!
//! Out-of-range, unparsable and failed calls are counted alongside the
//! histogram but never enter any statistic.

mod baseline;
mod gamma;

pub use baseline::{baseline_uniform_runs, summarize_baseline, BaselineSummary, MeanStd};
pub use gamma::{chi_square_sf, gamma_p, gamma_q, ln_gamma};

use serde::{Deserialize, Serialize};

use crate::parser::CallStatus;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("cell has no in-range values")]
    EmptyCell,
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("range 1-{0} is too small; need at least two values")]
    InvalidRange(u64),
}

/// Counts of in-range values 1..=k plus tallies of everything excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: Vec<u64>,
    pub n_out_of_range: u64,
    pub n_unparsable: u64,
    pub n_error: u64,
}

impl Histogram {
    pub fn new(upper: u64) -> Result<Self, StatsError> {
        if upper < 2 {
            return Err(StatsError::InvalidRange(upper));
        }
        Ok(Self {
            counts: vec![0; upper as usize],
            n_out_of_range: 0,
            n_unparsable: 0,
            n_error: 0,
        })
    }

    /// Counts indexed by value - 1.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self, StatsError> {
        let mut hist = Self::new(counts.len() as u64)?;
        hist.counts = counts;
        Ok(hist)
    }

    pub fn from_values(upper: u64, values: impl IntoIterator<Item = i64>) -> Result<Self, StatsError> {
        let mut hist = Self::new(upper)?;
        for v in values {
            hist.record_value(v);
        }
        Ok(hist)
    }

    /// Tally a parsed integer; values outside 1..=k only bump `n_out_of_range`.
    pub fn record_value(&mut self, value: i64) {
        if value >= 1 && (value as u64) <= self.upper() {
            self.counts[value as usize - 1] += 1;
        } else {
            self.n_out_of_range += 1;
        }
    }

    pub fn record(&mut self, status: CallStatus, value: Option<i64>) {
        match (status, value) {
            (CallStatus::ProviderError, _) => self.n_error += 1,
            (CallStatus::Unparsable, _) | (_, None) => self.n_unparsable += 1,
            (_, Some(v)) => self.record_value(v),
        }
    }

    pub fn upper(&self) -> u64 {
        self.counts.len() as u64
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_ok(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn unique_count(&self) -> u64 {
        self.counts.iter().filter(|&&c| c > 0).count() as u64
    }

    fn weighted(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| ((i + 1) as f64, c as f64))
    }

    pub fn mean(&self) -> Result<f64, StatsError> {
        let n = self.require_nonempty()? as f64;
        Ok(self.weighted().map(|(v, c)| v * c).sum::<f64>() / n)
    }

    /// Population standard deviation of the in-range values.
    pub fn std_dev(&self) -> Result<f64, StatsError> {
        let mean = self.mean()?;
        let n = self.n_ok() as f64;
        let var = self.weighted().map(|(v, c)| c * (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(var.sqrt())
    }

    fn require_nonempty(&self) -> Result<u64, StatsError> {
        match self.n_ok() {
            0 => Err(StatsError::EmptyCell),
            n => Ok(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Goodness-of-fit against the uniform distribution over all k bins.
pub fn chi_square_uniform(hist: &Histogram) -> Result<ChiSquare, StatsError> {
    let n = hist.require_nonempty()? as f64;
    let k = hist.upper();
    let expected = n / k as f64;
    let statistic = hist
        .counts()
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum::<f64>();
    let dof = k - 1;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}

/// Cramér's V for a one-way table of `k` categories, clamped to [0, 1].
pub fn cramers_v(chi2: f64, n: u64, k: u64) -> f64 {
    debug_assert!(chi2 >= 0.0 && n > 0 && k >= 2);
    (chi2 / (n as f64 * (k - 1) as f64)).sqrt().clamp(0.0, 1.0)
}

/// Denominator of the normalized entropy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyBase {
    /// log2 of the number of distinct observed values.
    #[default]
    DistinctObserved,
    /// log2 of the range size k.
    RangeSize,
}

pub fn shannon_entropy_norm(hist: &Histogram, base: EntropyBase) -> Result<f64, StatsError> {
    let n = hist.require_nonempty()? as f64;
    let buckets = match base {
        EntropyBase::DistinctObserved => hist.unique_count(),
        EntropyBase::RangeSize => hist.upper(),
    };
    if hist.unique_count() <= 1 || buckets <= 1 {
        return Ok(0.0);
    }
    let entropy = -hist
        .weighted()
        .map(|(_, c)| {
            let p = c / n;
            p * p.log2()
        })
        .sum::<f64>();
    Ok((entropy / (buckets as f64).log2()).clamp(0.0, 1.0))
}

/// Composite randomness index: coverage × relative spread × evenness,
/// divided by ln(k) and √T.
pub fn randomness_index(hist: &Histogram, temperature: f64) -> Result<f64, StatsError> {
    Ok(CellStats::compute(hist, temperature, EntropyBase::default())?.randomness_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub range_upper: u64,
    pub n_ok: u64,
    pub n_out_of_range: u64,
    pub n_unparsable: u64,
    pub n_error: u64,
    pub mean: f64,
    pub std: f64,
    pub sigma_star: f64,
    pub unique_count: u64,
    pub r_star: f64,
    pub h_norm: f64,
    pub chi2: f64,
    pub dof: u64,
    pub p_value: f64,
    pub cramers_v: f64,
    pub temperature: f64,
    pub randomness_index: f64,
}

impl CellStats {
    pub fn compute(hist: &Histogram, temperature: f64, base: EntropyBase) -> Result<Self, StatsError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(StatsError::InvalidTemperature(temperature));
        }
        let n_ok = hist.require_nonempty()?;
        let k = hist.upper();
        let mean = hist.mean()?;
        let std = hist.std_dev()?;
        let unique_count = hist.unique_count();
        let sigma_star = std / mean;
        let r_star = unique_count as f64 / k as f64;
        let h_norm = shannon_entropy_norm(hist, base)?;
        let chi = chi_square_uniform(hist)?;
        let randomness_index = if unique_count <= 1 {
            0.0
        } else {
            r_star * sigma_star * h_norm / ((k as f64).ln() * temperature.sqrt())
        };
        Ok(Self {
            range_upper: k,
            n_ok,
            n_out_of_range: hist.n_out_of_range,
            n_unparsable: hist.n_unparsable,
            n_error: hist.n_error,
            mean,
            std,
            sigma_star,
            unique_count,
            r_star,
            h_norm,
            chi2: chi.statistic,
            dof: chi.dof,
            p_value: chi.p_value,
            cramers_v: cramers_v(chi.statistic, n_ok, k),
            temperature,
            randomness_index,
        })
    }
}
