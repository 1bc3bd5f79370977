//! Randomness audit for language-model number generation: prompts, provider
//! calls, output parsing, statistics, reasoning-trace analysis and reports.

pub mod cot;
pub mod gateway;
pub mod language;
pub mod parser;
pub mod prompt;
pub mod report;
pub mod runner;
pub mod stats;

pub use cot::{CotAnalysis, CotAnalyzer, StrategyLabel};
pub use gateway::{CompletionRequest, CompletionResponse, GatewayError, Provider, ProviderConfig, ProviderKind};
pub use language::Language;
pub use parser::{parse_output, CallStatus, ParsedOutput};
pub use prompt::{PromptCatalog, PromptTemplate};
pub use report::{AggregateTable, CellSummary, HeatmapMatrix, Metric, ReportError};
pub use runner::{CallRecord, Cell, ExperimentPlan, RunOptions, RunSummary, RunnerError, Store};
pub use stats::{CellStats, EntropyBase, Histogram, StatsError};
