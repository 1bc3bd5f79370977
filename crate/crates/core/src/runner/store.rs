//! Append-only per-cell record files.
//!
//! Each cell owns `<stem>.csv` with one line per call and a sibling
//! `<stem>.jsonl` transcript. A record is durable once its CSV line ends in
//! a newline; the transcript line is written second and rebuilt from the CSV
//! if a crash falls between the two writes.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::plan::{Cell, ExperimentPlan};
use super::RunnerError;
use crate::parser::{extract_think, CallStatus};

pub const CSV_HEADER: &str = "call_index,timestamp_iso8601,status,parsed_value,think_present,raw_text_escaped";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One persisted call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_index: u64,
    pub timestamp: DateTime<Utc>,
    pub status: CallStatus,
    pub parsed_value: Option<i64>,
    pub think_present: bool,
    pub raw_text: String,
}

/// Full transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub call_index: u64,
    pub timestamp: DateTime<Utc>,
    pub status: CallStatus,
    pub parsed_value: Option<i64>,
    pub raw_text: String,
    pub think_text: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default)]
    pub latency_ms: u64,
}

/// Backslash escapes so the raw text never contains a comma, quote or line break.
pub fn escape_field(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            ',' => out.push_str("\\c"),
            '"' => out.push_str("\\q"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(escaped: &str) -> Result<String, String> {
    let mut out = String::with_capacity(escaped.len());
    let mut chars = escaped.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next() {
            Some('\\') => '\\',
            Some('n') => '\n',
            Some('r') => '\r',
            Some('t') => '\t',
            Some('c') => ',',
            Some('q') => '"',
            Some(other) => return Err(format!("unknown escape `\\{other}`")),
            None => return Err("dangling backslash".into()),
        });
    }
    Ok(out)
}

impl CallRecord {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}\n",
            self.call_index,
            self.timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
            self.status,
            self.parsed_value.map(|v| v.to_string()).unwrap_or_default(),
            self.think_present,
            escape_field(&self.raw_text)
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.splitn(6, ',').collect();
        let [index, ts, status, value, think, raw] = fields[..] else {
            return Err(format!("expected 6 fields, found {}", fields.len()));
        };
        Ok(Self {
            call_index: index.parse().map_err(|e| format!("call_index: {e}"))?,
            timestamp: DateTime::parse_from_rfc3339(ts)
                .map_err(|e| format!("timestamp: {e}"))?
                .with_timezone(&Utc),
            status: status.parse().map_err(|e| format!("{e}"))?,
            parsed_value: if value.is_empty() {
                None
            } else {
                Some(value.parse().map_err(|e| format!("parsed_value: {e}"))?)
            },
            think_present: think.parse().map_err(|e| format!("think_present: {e}"))?,
            raw_text: unescape_field(raw)?,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Storage {
        path: path.display().to_string(),
        source,
    }
}

/// Drop a trailing line that lacks its newline; returns the surviving text.
fn truncate_torn_tail(path: &Path) -> Result<String, RunnerError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let keep = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if keep < text.len() {
        log::warn!("{}: discarding torn trailing line", path.display());
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(keep as u64).map_err(io_err(path))?;
        f.sync_all().map_err(io_err(path))?;
    }
    Ok(text[..keep].to_string())
}

/// Parse a cell CSV. A missing file reads as no records.
pub fn read_cell_csv(path: &Path) -> Result<Vec<CallRecord>, RunnerError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_cell_csv(path, &text, false)
}

fn parse_cell_csv(path: &Path, text: &str, tolerate_torn_tail: bool) -> Result<Vec<CallRecord>, RunnerError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if i == 0 && *line == CSV_HEADER {
            continue;
        }
        let last_and_torn = i + 1 == lines.len() && !complete;
        match CallRecord::from_csv_line(line) {
            Ok(rec) => {
                if !seen.insert(rec.call_index) {
                    return Err(RunnerError::Corrupt {
                        path: path.display().to_string(),
                        line: i + 1,
                        reason: format!("duplicate call_index {}", rec.call_index),
                    });
                }
                out.push(rec);
            }
            Err(_) if last_and_torn && tolerate_torn_tail => break,
            Err(reason) => {
                return Err(RunnerError::Corrupt {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason,
                })
            }
        }
    }
    Ok(out)
}

/// Plan fields that must not change between a run and its resumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub seed: u64,
    pub providers: Vec<String>,
    pub languages: Vec<String>,
    pub ranges: Vec<u64>,
    pub temperatures: Vec<f64>,
    pub calls_per_cell: u64,
}

impl Manifest {
    pub fn of(plan: &ExperimentPlan) -> Self {
        Self {
            run_id: plan.run_id.clone(),
            seed: plan.seed,
            providers: plan.providers.iter().map(|p| p.name.clone()).collect(),
            languages: plan.languages.iter().map(|l| l.to_string()).collect(),
            ranges: plan.ranges.clone(),
            temperatures: plan.temperatures.clone(),
            calls_per_cell: plan.calls_per_cell,
        }
    }

    /// Differences that make `plan` incompatible with this store. A changed
    /// `calls_per_cell` is allowed so a finished run can be extended.
    pub fn drift_from(&self, plan: &ExperimentPlan) -> Vec<String> {
        let other = Self::of(plan);
        let mut diffs = Vec::new();
        macro_rules! cmp {
            ($field:ident) => {
                if self.$field != other.$field {
                    diffs.push(format!(
                        "{}: store has {:?}, plan has {:?}",
                        stringify!($field),
                        self.$field,
                        other.$field
                    ));
                }
            };
        }
        cmp!(run_id);
        cmp!(seed);
        cmp!(providers);
        cmp!(languages);
        cmp!(ranges);
        cmp!(temperatures);
        diffs
    }
}

/// Directory holding one run's cell files and manifest.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn csv_path(&self, cell: &Cell) -> PathBuf {
        self.root.join(format!("{}.csv", cell.file_stem()))
    }

    pub fn transcript_path(&self, cell: &Cell) -> PathBuf {
        self.root.join(format!("{}.jsonl", cell.file_stem()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn read_manifest(&self) -> Result<Option<Manifest>, RunnerError> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map(Some).map_err(|e| RunnerError::Corrupt {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), RunnerError> {
        std::fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let path = self.manifest_path();
        let tmp = self.root.join(format!("{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Cells with a CSV file in the store, sorted, with their records.
    pub fn scan(&self) -> Result<Vec<(Cell, Vec<CallRecord>)>, RunnerError> {
        let entries = std::fs::read_dir(&self.root).map_err(io_err(&self.root))?;
        let mut cells = Vec::new();
        for entry in entries {
            let path = entry.map_err(io_err(&self.root))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            let Some(cell) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(Cell::parse_file_stem)
            else {
                log::debug!("skipping {}: not a cell file", path.display());
                continue;
            };
            let records = read_cell_csv(&path)?;
            cells.push((cell, records));
        }
        cells.sort_by(|a, b| a.0.cmp_key(&b.0));
        Ok(cells)
    }

    /// Open a cell for appending after repairing any interrupted write.
    pub fn open_cell(&self, cell: &Cell) -> Result<CellWriter, RunnerError> {
        std::fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let csv_path = self.csv_path(cell);
        let jsonl_path = self.transcript_path(cell);

        let records = if csv_path.exists() {
            let text = truncate_torn_tail(&csv_path)?;
            parse_cell_csv(&csv_path, &text, false)?
        } else {
            Vec::new()
        };
        let transcript_indices: BTreeSet<u64> = if jsonl_path.exists() {
            let text = truncate_torn_tail(&jsonl_path)?;
            text.lines()
                .filter_map(|l| serde_json::from_str::<TranscriptEntry>(l).ok())
                .map(|e| e.call_index)
                .collect()
        } else {
            BTreeSet::new()
        };

        let mut csv = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&csv_path)
            .map_err(io_err(&csv_path))?;
        if records.is_empty() && csv.metadata().map_err(io_err(&csv_path))?.len() == 0 {
            csv.write_all(format!("{CSV_HEADER}\n").as_bytes())
                .map_err(io_err(&csv_path))?;
        }
        let jsonl = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&jsonl_path)
            .map_err(io_err(&jsonl_path))?;

        let mut writer = CellWriter {
            csv,
            csv_path,
            jsonl: BufWriter::new(jsonl),
            jsonl_path,
            existing: records.iter().map(|r| r.call_index).collect(),
        };
        // Records that reached the CSV but not the transcript.
        for rec in records.iter().filter(|r| !transcript_indices.contains(&r.call_index)) {
            log::warn!("{}: rebuilding transcript line for call {}", cell, rec.call_index);
            let entry = TranscriptEntry {
                call_index: rec.call_index,
                timestamp: rec.timestamp,
                status: rec.status,
                parsed_value: rec.parsed_value,
                raw_text: rec.raw_text.clone(),
                think_text: extract_think(&rec.raw_text).think,
                error: (rec.status == CallStatus::ProviderError).then(|| "not recorded".to_string()),
                attempts: 0,
                latency_ms: 0,
            };
            writer.write_transcript(&entry)?;
        }
        Ok(writer)
    }
}

/// Sole writer of one cell.
pub struct CellWriter {
    csv: File,
    csv_path: PathBuf,
    jsonl: BufWriter<File>,
    jsonl_path: PathBuf,
    existing: BTreeSet<u64>,
}

impl CellWriter {
    pub fn existing(&self) -> &BTreeSet<u64> {
        &self.existing
    }

    /// Indices in `0..calls_per_cell` not yet recorded, ascending.
    pub fn missing(&self, calls_per_cell: u64) -> Vec<u64> {
        (0..calls_per_cell).filter(|i| !self.existing.contains(i)).collect()
    }

    /// Persist one call: CSV line first, then the transcript line.
    pub fn append(&mut self, record: &CallRecord, entry: &TranscriptEntry) -> Result<(), RunnerError> {
        if !self.existing.insert(record.call_index) {
            return Err(RunnerError::Corrupt {
                path: self.csv_path.display().to_string(),
                line: 0,
                reason: format!("call_index {} already recorded", record.call_index),
            });
        }
        self.csv
            .write_all(record.to_csv_line().as_bytes())
            .map_err(io_err(&self.csv_path))?;
        self.write_transcript(entry)
    }

    fn write_transcript(&mut self, entry: &TranscriptEntry) -> Result<(), RunnerError> {
        let mut line = serde_json::to_string(entry).expect("transcript entries serialize");
        line.push('\n');
        self.jsonl
            .write_all(line.as_bytes())
            .map_err(io_err(&self.jsonl_path))?;
        self.jsonl.flush().map_err(io_err(&self.jsonl_path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::language::Language;

    fn cell() -> Cell {
        Cell {
            provider: "m".into(),
            language: Language::EN,
            range_upper: 5,
            temperature: 1.0,
        }
    }

    fn record(i: u64, raw: &str) -> CallRecord {
        CallRecord {
            call_index: i,
            timestamp: DateTime::parse_from_rfc3339("2026-01-02T03:04:05.678Z")
                .unwrap()
                .with_timezone(&Utc),
            status: CallStatus::Ok,
            parsed_value: Some(3),
            think_present: false,
            raw_text: raw.into(),
        }
    }

    fn entry(r: &CallRecord) -> TranscriptEntry {
        TranscriptEntry {
            call_index: r.call_index,
            timestamp: r.timestamp,
            status: r.status,
            parsed_value: r.parsed_value,
            raw_text: r.raw_text.clone(),
            think_text: None,
            error: None,
            attempts: 1,
            latency_ms: 0,
        }
    }

    #[test]
    fn escaping_round_trips() {
        for s in [
            "",
            "3",
            "a,b",
            "line\nbreak\r\n",
            "tab\there",
            "back\\slash\\n",
            "\"q\"",
            "中文，3",
        ] {
            let e = escape_field(s);
            assert!(!e.contains(',') && !e.contains('\n') && !e.contains('"'));
            assert_eq!(unescape_field(&e).unwrap(), s);
        }
        assert!(unescape_field("bad\\z").is_err());
        assert!(unescape_field("bad\\").is_err());
    }

    #[test]
    fn csv_line_round_trips() {
        let mut r = record(7, "<think>1,2,3\n</think> 3");
        r.think_present = true;
        let line = r.to_csv_line();
        assert_eq!(line.matches(',').count(), 5);
        assert_eq!(CallRecord::from_csv_line(line.trim_end_matches('\n')).unwrap(), r);
        let mut e = record(8, "");
        e.status = CallStatus::ProviderError;
        e.parsed_value = None;
        assert_eq!(CallRecord::from_csv_line(e.to_csv_line().trim_end()).unwrap(), e);
    }

    #[test]
    fn torn_lines_are_dropped_and_transcript_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let mut w = store.open_cell(&cell()).unwrap();
        for i in 0..3 {
            let r = record(i, "3");
            w.append(&r, &entry(&r)).unwrap();
        }
        drop(w);
        // Crash mid-line in the CSV after a full record whose transcript was lost.
        let csv = store.csv_path(&cell());
        let mut f = OpenOptions::new().append(true).open(&csv).unwrap();
        f.write_all(record(3, "3").to_csv_line().as_bytes()).unwrap();
        f.write_all(b"4,2026-01-02T03:04").unwrap();
        drop(f);

        let w = store.open_cell(&cell()).unwrap();
        assert_eq!(w.missing(6), vec![4, 5]);
        drop(w);
        let recs = read_cell_csv(&csv).unwrap();
        assert_eq!(recs.len(), 4);
        let transcript = std::fs::read_to_string(store.transcript_path(&cell())).unwrap();
        assert_eq!(transcript.lines().count(), 4);
    }

    #[test]
    fn duplicate_indices_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let mut w = store.open_cell(&cell()).unwrap();
        let r = record(0, "3");
        w.append(&r, &entry(&r)).unwrap();
        assert!(matches!(w.append(&r, &entry(&r)), Err(RunnerError::Corrupt { .. })));
    }

    #[test]
    fn scan_finds_cells_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let mut w = store.open_cell(&cell()).unwrap();
        let r = record(0, "3");
        w.append(&r, &entry(&r)).unwrap();
        std::fs::write(dir.path().join("notes.csv"), "x").unwrap();
        let cells = store.scan().unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].0, cell());
        assert_eq!(cells[0].1, vec![r]);
    }
}
