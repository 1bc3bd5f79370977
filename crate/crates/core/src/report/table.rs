use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{CellSummary, ReportError};
use crate::language::Language;
use crate::stats::CellStats;

/// Marker printed for cells without metrics.
pub const ABSENT: &str = "--";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ri,
    PValue,
    CramersV,
    HNorm,
    Chi2,
}

impl Metric {
    pub fn of(self, s: &CellStats) -> f64 {
        match self {
            Metric::Ri => s.randomness_index,
            Metric::PValue => s.p_value,
            Metric::CramersV => s.cramers_v,
            Metric::HNorm => s.h_norm,
            Metric::Chi2 => s.chi2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ri => "ri",
            Metric::PValue => "p_value",
            Metric::CramersV => "cramers_v",
            Metric::HNorm => "h_norm",
            Metric::Chi2 => "chi2",
        }
    }
}

impl FromStr for Metric {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ri" | "randomness_index" => Metric::Ri,
            "p" | "p_value" => Metric::PValue,
            "v" | "cramers_v" => Metric::CramersV,
            "h" | "h_norm" => Metric::HNorm,
            "chi2" => Metric::Chi2,
            _ => {
                return Err(ReportError::UnknownOption {
                    what: "metric",
                    value: s.to_string(),
                })
            }
        })
    }
}

/// Two decimals, or three when two would print as zero.
///
/// `0.0614` → `0.06`, `0.0042` → `0.004`, `0` → `0.000`.
pub fn format_value(v: f64) -> String {
    if (v * 100.0).round().abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Provider × language means over temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub metric: Metric,
    pub rows: Vec<String>,
    pub columns: Vec<Language>,
    /// `values[row][column]`; `None` marks an absent cell.
    pub values: Vec<Vec<Option<f64>>>,
    pub row_avg: Vec<Option<f64>>,
    pub col_avg: Vec<Option<f64>>,
    /// Mean of every present cell.
    pub grand_avg: Option<f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Average `metric` per (provider, language) over its present temperatures.
///
/// Languages appear in the fixed CN..RU order; providers sorted by name.
/// Inputs are grouped before summing, so their order never matters.
pub fn aggregate_table(stats: &[CellSummary], metric: Metric) -> Result<AggregateTable, ReportError> {
    if stats.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut groups: BTreeMap<(String, Language), Vec<(u64, f64)>> = BTreeMap::new();
    for s in stats {
        let entry = groups.entry((s.cell.provider.clone(), s.cell.language)).or_default();
        if let Some(st) = &s.stats {
            entry.push((s.cell.temperature.to_bits(), metric.of(st)));
        }
    }
    let rows: Vec<String> = {
        let mut r: Vec<String> = groups.keys().map(|(p, _)| p.clone()).collect();
        r.dedup();
        r
    };
    let columns: Vec<Language> = Language::ALL
        .into_iter()
        .filter(|l| groups.keys().any(|(_, gl)| gl == l))
        .collect();
    let values: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|p| {
            columns
                .iter()
                .map(|l| {
                    groups.get(&(p.clone(), *l)).and_then(|v| {
                        let mut v = v.clone();
                        v.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
                        mean(v.into_iter().map(|(_, x)| x))
                    })
                })
                .collect()
        })
        .collect();
    let row_avg = values.iter().map(|r| mean(r.iter().flatten().copied())).collect();
    let col_avg = (0..columns.len())
        .map(|j| mean(values.iter().filter_map(|r| r[j])))
        .collect();
    let grand_avg = mean(values.iter().flatten().flatten().copied());
    Ok(AggregateTable {
        metric,
        rows,
        columns,
        values,
        row_avg,
        col_avg,
        grand_avg,
    })
}

fn cell_text(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), format_value)
}

impl AggregateTable {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["Model".to_string()];
        h.extend(self.columns.iter().map(|l| l.to_string()));
        h.push("Model avg".into());
        h
    }

    fn body(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .rows
            .iter()
            .zip(&self.values)
            .zip(&self.row_avg)
            .map(|((name, vals), avg)| {
                let mut r = vec![name.clone()];
                r.extend(vals.iter().map(|v| cell_text(*v)));
                r.push(cell_text(*avg));
                r
            })
            .collect();
        let mut last = vec!["Language avg".to_string()];
        last.extend(self.col_avg.iter().map(|v| cell_text(*v)));
        last.push(cell_text(self.grand_avg));
        out.push(last);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header().join(",");
        s.push('\n');
        for r in self.body() {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let header = self.header();
        let mut s = format!("| {} |\n", header.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
        for r in self.body() {
            let _ = writeln!(s, "| {} |", r.join(" | "));
        }
        s
    }
}
