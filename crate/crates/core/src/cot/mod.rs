//! Rule-based mining of think blocks.
//!
//! Strategy labels and commitment phrases come from a pattern table
//! (`data/patterns.toml` by default). Language detection uses script
//! ratios and small stopword lists.

mod language;

pub use language::detect_reasoning_language;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::language::Language;
use crate::parser::{extract_think, standalone_integers};
use crate::runner::{Cell, Store};

const BUNDLED_PATTERNS: &str = include_str!("../../data/patterns.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyLabel {
    PiDigits,
    DateTime,
    CentralValue,
    WordMapping,
    CodeRandFunction,
    RealWorldSimulation,
    PersonalInfo,
    Instinct,
    Other,
}

impl StrategyLabel {
    pub const ALL: [StrategyLabel; 9] = [
        StrategyLabel::PiDigits,
        StrategyLabel::DateTime,
        StrategyLabel::CentralValue,
        StrategyLabel::WordMapping,
        StrategyLabel::CodeRandFunction,
        StrategyLabel::RealWorldSimulation,
        StrategyLabel::PersonalInfo,
        StrategyLabel::Instinct,
        StrategyLabel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyLabel::PiDigits => "PiDigits",
            StrategyLabel::DateTime => "DateTime",
            StrategyLabel::CentralValue => "CentralValue",
            StrategyLabel::WordMapping => "WordMapping",
            StrategyLabel::CodeRandFunction => "CodeRandFunction",
            StrategyLabel::RealWorldSimulation => "RealWorldSimulation",
            StrategyLabel::PersonalInfo => "PersonalInfo",
            StrategyLabel::Instinct => "Instinct",
            StrategyLabel::Other => "Other",
        }
    }
}

impl fmt::Display for StrategyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyLabel {
    type Err = CotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| CotError::Patterns(format!("unknown label `{s}`")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CotError {
    #[error("no traces to aggregate")]
    EmptyAggregate,
    #[error("bad pattern table: {0}")]
    Patterns(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPattern {
    label: String,
    language_code: String,
    regex: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCommitment {
    language_code: String,
    regex: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    #[serde(default)]
    pattern: Vec<RawPattern>,
    #[serde(default)]
    commitment: Vec<RawCommitment>,
}

#[derive(Debug, Clone)]
pub struct StrategyPattern {
    pub label: StrategyLabel,
    pub language_code: String,
    pub regex: Regex,
}

#[derive(Debug, Clone)]
pub struct CommitmentPattern {
    pub language_code: String,
    pub regex: Regex,
}

fn compile(source: &str) -> Result<Regex, CotError> {
    RegexBuilder::new(source)
        .case_insensitive(true)
        .build()
        .map_err(|e| CotError::Patterns(e.to_string()))
}

/// Numbers found in a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumberExtraction {
    pub proposed_numbers: Vec<i64>,
    pub final_stated: Option<i64>,
    pub mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotAnalysis {
    pub labels: BTreeSet<StrategyLabel>,
    pub reasoning_language: Option<Language>,
    pub proposed_numbers: Vec<i64>,
    pub final_stated: Option<i64>,
    pub mismatch: bool,
}

#[derive(Debug, Clone)]
pub struct CotAnalyzer {
    patterns: Vec<StrategyPattern>,
    commitments: Vec<CommitmentPattern>,
}

impl CotAnalyzer {
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_PATTERNS).expect("bundled pattern table is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CotError> {
        let raw: RawTable = toml::from_str(text).map_err(|e| CotError::Patterns(e.to_string()))?;
        let mut patterns = Vec::with_capacity(raw.pattern.len());
        for p in raw.pattern {
            let label: StrategyLabel = p.label.parse()?;
            if label == StrategyLabel::Other {
                return Err(CotError::Patterns(
                    "`Other` is assigned implicitly and takes no patterns".into(),
                ));
            }
            patterns.push(StrategyPattern {
                label,
                language_code: p.language_code,
                regex: compile(&p.regex)?,
            });
        }
        let mut commitments = Vec::with_capacity(raw.commitment.len());
        for c in raw.commitment {
            let regex = compile(&c.regex)?;
            if regex.captures_len() != 2 {
                return Err(CotError::Patterns(format!(
                    "commitment `{}` needs exactly one capture group",
                    c.regex
                )));
            }
            commitments.push(CommitmentPattern {
                language_code: c.language_code,
                regex,
            });
        }
        Ok(Self { patterns, commitments })
    }

    pub fn from_path(path: &Path) -> Result<Self, CotError> {
        let text = std::fs::read_to_string(path).map_err(|source| CotError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn patterns(&self) -> &[StrategyPattern] {
        &self.patterns
    }

    pub fn commitments(&self) -> &[CommitmentPattern] {
        &self.commitments
    }

    /// Every label with a pattern hit; `{Other}` if none fires; empty for blank text.
    pub fn classify_strategies(&self, think_text: &str) -> BTreeSet<StrategyLabel> {
        if think_text.trim().is_empty() {
            return BTreeSet::new();
        }
        let mut labels: BTreeSet<StrategyLabel> = self
            .patterns
            .iter()
            .filter(|p| p.regex.is_match(think_text))
            .map(|p| p.label)
            .collect();
        if labels.is_empty() {
            labels.insert(StrategyLabel::Other);
        }
        labels
    }

    /// The number a trace commits to: the last commitment hit by position.
    pub fn final_stated(&self, think_text: &str) -> Option<i64> {
        self.commitments
            .iter()
            .flat_map(|c| c.regex.captures_iter(think_text))
            .filter_map(|caps| caps.get(1))
            .filter_map(|m| m.as_str().parse::<i64>().ok().map(|v| (m.start(), v)))
            .max_by_key(|&(pos, _)| pos)
            .map(|(_, v)| v)
    }

    pub fn extract_numbers(&self, think_text: &str, remainder_value: Option<i64>) -> NumberExtraction {
        let final_stated = self.final_stated(think_text);
        NumberExtraction {
            proposed_numbers: standalone_integers(think_text),
            final_stated,
            mismatch: matches!((final_stated, remainder_value), (Some(a), Some(b)) if a != b),
        }
    }

    pub fn analyze(&self, think_text: &str, parsed_value: Option<i64>) -> CotAnalysis {
        let numbers = self.extract_numbers(think_text, parsed_value);
        CotAnalysis {
            labels: self.classify_strategies(think_text),
            reasoning_language: detect_reasoning_language(think_text),
            proposed_numbers: numbers.proposed_numbers,
            final_stated: numbers.final_stated,
            mismatch: numbers.mismatch,
        }
    }
}

/// Share of traces carrying each label and each reasoning language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFrequencies {
    pub n_traces: usize,
    pub label_counts: BTreeMap<StrategyLabel, usize>,
    pub labels: BTreeMap<StrategyLabel, f64>,
    /// Keyed by language code, or `unknown`.
    pub languages: BTreeMap<String, f64>,
    pub mismatch_rate: f64,
}

pub fn aggregate_strategies(analyses: &[CotAnalysis]) -> Result<StrategyFrequencies, CotError> {
    if analyses.is_empty() {
        return Err(CotError::EmptyAggregate);
    }
    let n = analyses.len();
    let mut label_counts: BTreeMap<StrategyLabel, usize> = StrategyLabel::ALL.iter().map(|&l| (l, 0)).collect();
    let mut language_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut mismatches = 0;
    for a in analyses {
        for l in &a.labels {
            *label_counts.entry(*l).or_default() += 1;
        }
        let lang = a
            .reasoning_language
            .map_or_else(|| "unknown".to_string(), |l| l.to_string());
        *language_counts.entry(lang).or_default() += 1;
        mismatches += a.mismatch as usize;
    }
    let frac = |c: usize| c as f64 / n as f64;
    Ok(StrategyFrequencies {
        n_traces: n,
        labels: label_counts.iter().map(|(&l, &c)| (l, frac(c))).collect(),
        label_counts,
        languages: language_counts.into_iter().map(|(k, c)| (k, frac(c))).collect(),
        mismatch_rate: frac(mismatches),
    })
}

/// One analysed think block from a store.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CotRow {
    pub cell_key: String,
    pub call_index: u64,
    pub analysis: CotAnalysis,
}

pub const COT_CSV_HEADER: &str = "cell_key,call_index,labels,reasoning_language,n_proposed,final_stated,mismatch";

impl CotRow {
    pub fn to_csv_line(&self) -> String {
        let labels: Vec<&str> = self.analysis.labels.iter().map(|l| l.as_str()).collect();
        format!(
            "{},{},{},{},{},{},{}",
            self.cell_key,
            self.call_index,
            labels.join(";"),
            self.analysis
                .reasoning_language
                .map_or_else(|| "unknown".to_string(), |l| l.to_string()),
            self.analysis.proposed_numbers.len(),
            self.analysis.final_stated.map(|v| v.to_string()).unwrap_or_default(),
            self.analysis.mismatch
        )
    }
}

/// Analyse every record with a think block. The remainder's parsed value
/// is what mismatches are judged against.
pub fn analyze_records<'a>(
    analyzer: &CotAnalyzer,
    cells: impl IntoIterator<Item = (&'a Cell, &'a [crate::runner::CallRecord])>,
) -> Vec<CotRow> {
    let mut rows = Vec::new();
    for (cell, records) in cells {
        for rec in records {
            let Some(think) = extract_think(&rec.raw_text).think else {
                continue;
            };
            rows.push(CotRow {
                cell_key: cell.file_stem(),
                call_index: rec.call_index,
                analysis: analyzer.analyze(&think, rec.parsed_value),
            });
        }
    }
    rows
}

pub fn analyze_store(analyzer: &CotAnalyzer, store: &Store) -> Result<Vec<CotRow>, crate::runner::RunnerError> {
    let cells = store.scan()?;
    Ok(analyze_records(analyzer, cells.iter().map(|(c, r)| (c, r.as_slice()))))
}
