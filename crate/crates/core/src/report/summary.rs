use std::io::Write;

use super::ReportError;
use crate::language::Language;
use crate::runner::{format_temperature, CallRecord, Cell, Store};
use crate::stats::{CellStats, EntropyBase, Histogram};

pub const STATS_CSV_HEADER: &str = "provider,language,range_upper,temperature,n_ok,n_out_of_range,n_unparsable,\
unique_count,mean,std,r_star,sigma_star,h_norm,chi2,dof,p_value,cramers_v,randomness_index";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryOptions {
    /// Share of a cell's records that must parse in range for it to be reported.
    pub min_valid_fraction: f64,
    pub entropy_base: EntropyBase,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            min_valid_fraction: 0.5,
            entropy_base: EntropyBase::default(),
        }
    }
}

/// Counts for one cell plus its statistics, or `None` when the cell is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: Cell,
    pub n_records: u64,
    pub n_ok: u64,
    pub n_out_of_range: u64,
    pub n_unparsable: u64,
    pub n_error: u64,
    pub unique_count: u64,
    pub stats: Option<CellStats>,
}

impl CellSummary {
    pub fn is_present(&self) -> bool {
        self.stats.is_some()
    }
}

fn summarize_cell(cell: &Cell, records: &[CallRecord], opts: &SummaryOptions) -> Result<CellSummary, ReportError> {
    let mut hist = Histogram::new(cell.range_upper)?;
    for r in records {
        hist.record(r.status, r.parsed_value);
    }
    let n_records = records.len() as u64;
    let needed = (opts.min_valid_fraction * n_records as f64).ceil() as u64;
    let stats = if hist.n_ok() > 0 && hist.n_ok() >= needed {
        match CellStats::compute(&hist, cell.temperature, opts.entropy_base) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("{cell}: no statistics ({e})");
                None
            }
        }
    } else {
        log::info!(
            "{cell}: {} of {n_records} in range, below threshold; marked absent",
            hist.n_ok()
        );
        None
    };
    Ok(CellSummary {
        cell: cell.clone(),
        n_records,
        n_ok: hist.n_ok(),
        n_out_of_range: hist.n_out_of_range,
        n_unparsable: hist.n_unparsable,
        n_error: hist.n_error,
        unique_count: hist.unique_count(),
        stats,
    })
}

pub fn summarize_cells(
    cells: &[(Cell, Vec<CallRecord>)],
    opts: &SummaryOptions,
) -> Result<Vec<CellSummary>, ReportError> {
    cells.iter().map(|(c, r)| summarize_cell(c, r, opts)).collect()
}

/// One summary per cell file in the store, in cell order.
pub fn summarize_store(store: &Store, opts: &SummaryOptions) -> Result<Vec<CellSummary>, ReportError> {
    let cells = store.scan()?;
    summarize_cells(&cells, opts)
}

fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn write_stats_csv(summaries: &[CellSummary], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{STATS_CSV_HEADER}")?;
    for s in summaries {
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.cell.provider,
            s.cell.language,
            s.cell.range_upper,
            format_temperature(s.cell.temperature),
            s.n_ok,
            s.n_out_of_range,
            s.n_unparsable,
            s.unique_count
        )?;
        match &s.stats {
            Some(st) => writeln!(
                out,
                ",{},{},{},{},{},{},{},{},{},{}",
                num(st.mean),
                num(st.std),
                num(st.r_star),
                num(st.sigma_star),
                num(st.h_norm),
                num(st.chi2),
                st.dof,
                num(st.p_value),
                num(st.cramers_v),
                num(st.randomness_index)
            )?,
            None => writeln!(out, ",,,,,,,,,,")?,
        }
    }
    Ok(())
}

/// Inverse of [`write_stats_csv`]. Provider-error counts are not part of the
/// file and read back as zero.
pub fn read_stats_csv(text: &str) -> Result<Vec<CellSummary>, ReportError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || (i == 0 && line.starts_with("provider,")) {
            continue;
        }
        let bad = |reason: String| ReportError::Parse { line: line_no, reason };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 18 {
            return Err(bad(format!("expected 18 columns, found {}", f.len())));
        }
        fn parse<T: std::str::FromStr>(s: &str, name: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.parse().map_err(|e| format!("{name}: {e}"))
        }
        let language: Language = f[1].parse().map_err(|e| bad(format!("{e}")))?;
        let range_upper: u64 = parse(f[2], "range_upper").map_err(bad)?;
        let temperature: f64 = parse(f[3], "temperature").map_err(bad)?;
        let n_ok: u64 = parse(f[4], "n_ok").map_err(bad)?;
        let n_out_of_range: u64 = parse(f[5], "n_out_of_range").map_err(bad)?;
        let n_unparsable: u64 = parse(f[6], "n_unparsable").map_err(bad)?;
        let unique_count: u64 = parse(f[7], "unique_count").map_err(bad)?;
        let stats = if f[8..].iter().all(|s| s.is_empty()) {
            None
        } else {
            let g = |j: usize, name: &str| parse::<f64>(f[j], name).map_err(bad);
            Some(CellStats {
                range_upper,
                n_ok,
                n_out_of_range,
                n_unparsable,
                n_error: 0,
                mean: g(8, "mean")?,
                std: g(9, "std")?,
                r_star: g(10, "r_star")?,
                sigma_star: g(11, "sigma_star")?,
                h_norm: g(12, "h_norm")?,
                chi2: g(13, "chi2")?,
                dof: parse(f[14], "dof").map_err(bad)?,
                p_value: g(15, "p_value")?,
                cramers_v: g(16, "cramers_v")?,
                temperature,
                unique_count,
                randomness_index: g(17, "randomness_index")?,
            })
        };
        out.push(CellSummary {
            cell: Cell {
                provider: f[0].to_string(),
                language,
                range_upper,
                temperature,
            },
            n_records: n_ok + n_out_of_range + n_unparsable,
            n_ok,
            n_out_of_range,
            n_unparsable,
            n_error: 0,
            unique_count,
            stats,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::CallStatus;
    use chrono::Utc;

    fn cell(t: f64) -> Cell {
        Cell {
            provider: "m".into(),
            language: Language::JP,
            range_upper: 5,
            temperature: t,
        }
    }

    fn records(values: &[Option<i64>]) -> Vec<CallRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| CallRecord {
                call_index: i as u64,
                timestamp: Utc::now(),
                status: match v {
                    Some(x) if (1..=5).contains(x) => CallStatus::Ok,
                    Some(_) => CallStatus::OutOfRange,
                    None => CallStatus::Unparsable,
                },
                parsed_value: *v,
                think_present: false,
                raw_text: String::new(),
            })
            .collect()
    }

    #[test]
    fn constant_cell_is_degenerate() {
        let cells = vec![(cell(1.0), records(&[Some(3); 100]))];
        let s = &summarize_cells(&cells, &SummaryOptions::default()).unwrap()[0];
        let st = s.stats.as_ref().unwrap();
        assert_eq!(st.randomness_index, 0.0);
        assert_eq!(st.cramers_v, 1.0);
        assert!(st.p_value < 1e-80 && st.p_value > 0.0);
    }

    #[test]
    fn unparsable_cells_are_absent() {
        let cells = vec![
            (cell(1.0), records(&[None; 100])),
            (cell(0.5), records(&[[Some(3)].as_slice(), &[None; 51]].concat())),
            (
                cell(0.1),
                records(&[[Some(3), Some(4)].repeat(25).as_slice(), &[None; 50]].concat()),
            ),
        ];
        let s = summarize_cells(&cells, &SummaryOptions::default()).unwrap();
        assert!(!s[0].is_present());
        assert_eq!(s[0].n_unparsable, 100);
        assert!(!s[1].is_present());
        assert!(s[2].is_present(), "exactly half in range is enough");
    }

    #[test]
    fn stats_csv_round_trip() {
        let cells = vec![
            (cell(1.0), records(&[Some(1), Some(2), Some(2), Some(9), None])),
            (cell(0.1), records(&[None; 4])),
            (cell(0.3), records(&[Some(3); 20])),
        ];
        let s = summarize_cells(&cells, &SummaryOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_stats_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(STATS_CSV_HEADER));
        assert!(text.contains("e-"), "tiny p-values use exponent notation");
        let back = read_stats_csv(&text).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in s.iter().zip(&back) {
            assert_eq!(a.cell, b.cell);
            assert_eq!(a.is_present(), b.is_present());
            if let (Some(x), Some(y)) = (&a.stats, &b.stats) {
                assert_eq!(x.randomness_index, y.randomness_index);
                assert_eq!(x.p_value, y.p_value);
                assert_eq!(x.chi2, y.chi2);
            }
        }
        assert!(read_stats_csv("a,b\n").is_err());
    }
}
