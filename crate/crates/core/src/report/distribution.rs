use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::ReportError;
use crate::runner::{format_temperature, CallRecord, Cell};

pub const DISTRIBUTION_CSV_HEADER: &str = "group,n,min,q1,median,q3,max,mean,n_outliers,outliers";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Provider,
    Language,
    Temperature,
    Range,
    Cell,
}

impl FromStr for GroupBy {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "provider" | "model" => Self::Provider,
            "language" => Self::Language,
            "temperature" => Self::Temperature,
            "range" => Self::Range,
            "cell" => Self::Cell,
            _ => {
                return Err(ReportError::UnknownOption {
                    what: "grouping",
                    value: s.to_string(),
                })
            }
        })
    }
}

impl GroupBy {
    fn key(self, c: &Cell) -> String {
        match self {
            Self::Provider => c.provider.clone(),
            Self::Language => c.language.to_string(),
            Self::Temperature => format!("T={}", format_temperature(c.temperature)),
            Self::Range => format!("1-{}", c.range_upper),
            Self::Cell => c.to_string(),
        }
    }
}

/// Five-number summary plus outliers of the in-range values in one group.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub group: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Values beyond 1.5 IQR from the quartiles, ascending.
    pub outliers: Vec<f64>,
}

impl DistributionSummary {
    fn of(group: String, mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let q1 = quantile_type7(&values, 0.25)?;
        let q3 = quantile_type7(&values, 0.75)?;
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        Some(Self {
            n: values.len(),
            min: values[0],
            q1,
            median: quantile_type7(&values, 0.5)?,
            q3,
            max: values[values.len() - 1],
            mean: values.iter().sum::<f64>() / values.len() as f64,
            outliers: values.iter().copied().filter(|v| *v < lo || *v > hi).collect(),
            group,
        })
    }

    pub fn to_csv_line(&self) -> String {
        let outliers: Vec<String> = self.outliers.iter().map(|v| v.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.group,
            self.n,
            self.min,
            self.q1,
            self.median,
            self.q3,
            self.max,
            self.mean,
            self.outliers.len(),
            outliers.join(" ")
        )
    }
}

/// Linear-interpolation quantile (R type 7) of already sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Summaries of in-range values, one per non-empty group, sorted by group key.
pub fn distribution_summary(cells: &[(Cell, Vec<CallRecord>)], by: GroupBy) -> Vec<DistributionSummary> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (cell, records) in cells {
        let entry = groups.entry(by.key(cell)).or_default();
        entry.extend(
            records
                .iter()
                .filter(|r| r.status.is_in_range())
                .filter_map(|r| r.parsed_value)
                .map(|v| v as f64),
        );
    }
    groups
        .into_iter()
        .filter_map(|(g, v)| DistributionSummary::of(g, v))
        .collect()
}

pub fn distribution_csv(summaries: &[DistributionSummary]) -> String {
    let mut s = String::from(DISTRIBUTION_CSV_HEADER);
    s.push('\n');
    for d in summaries {
        let _ = writeln!(s, "{}", d.to_csv_line());
    }
    s
}
