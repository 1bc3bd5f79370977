//! Plan expansion, call execution and resumable persistence.

mod plan;
mod store;

pub use plan::{
    expand_plan, format_temperature, Cell, ExperimentPlan, RangeSpec, DEFAULT_CALLS_PER_CELL, DEFAULT_TEMPERATURES,
};
pub use store::{
    escape_field, read_cell_csv, unescape_field, CallRecord, CellWriter, Manifest, Store, TranscriptEntry, CSV_HEADER,
    MANIFEST_FILE,
};

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::Utc;
use serde::Serialize;

use crate::gateway::{CallOrigin, GatewayError, Provider};
use crate::parser::{parse_output, CallStatus};
use crate::prompt::{PromptCatalog, PromptError};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("plan has no {0}")]
    EmptyPlan(&'static str),
    #[error("plan expands to duplicate cell {0}")]
    DuplicateCell(String),
    #[error("store does not match the plan: {}", .0.join("; "))]
    PlanDrift(Vec<String>),
    #[error("store {0} already holds a run; use resume")]
    StoreExists(String),
    #[error("store {0} has no run to resume")]
    NoRun(String),
    #[error("storage failure at {path}: {source}")]
    Storage {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store file {path} (line {line}): {reason}")]
    Corrupt { path: String, line: usize, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; defaults to the sum of provider in-flight bounds.
    pub workers: Option<usize>,
    /// Stop after this many new calls, leaving the store resumable.
    pub max_new_calls: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub cells_total: usize,
    pub cells_completed: usize,
    pub calls_new: u64,
    pub calls_existing: u64,
    /// New calls per status.
    pub statuses: BTreeMap<CallStatus, u64>,
    pub calls_error: u64,
    pub wall_time_ms: u64,
}

impl RunSummary {
    pub fn calls_ok(&self) -> u64 {
        self.statuses.get(&CallStatus::Ok).copied().unwrap_or(0)
    }
}

/// Start a run in a store that has none.
pub fn run(plan: &ExperimentPlan, store_dir: &Path, options: &RunOptions) -> Result<RunSummary, RunnerError> {
    let store = Store::new(store_dir);
    if store.read_manifest()?.is_some() {
        return Err(RunnerError::StoreExists(store_dir.display().to_string()));
    }
    let providers = prepare(plan)?;
    store.write_manifest(&Manifest::of(plan))?;
    execute(plan, &store, providers, options)
}

/// Fill in the calls a previous run did not record.
pub fn resume(plan: &ExperimentPlan, store_dir: &Path, options: &RunOptions) -> Result<RunSummary, RunnerError> {
    let store = Store::new(store_dir);
    let manifest = store
        .read_manifest()?
        .ok_or_else(|| RunnerError::NoRun(store_dir.display().to_string()))?;
    let drift = manifest.drift_from(plan);
    if !drift.is_empty() {
        return Err(RunnerError::PlanDrift(drift));
    }
    let providers = prepare(plan)?;
    if manifest.calls_per_cell != plan.calls_per_cell {
        store.write_manifest(&Manifest::of(plan))?;
    }
    execute(plan, &store, providers, options)
}

struct Prepared {
    cells: Vec<Cell>,
    providers: BTreeMap<String, Arc<Provider>>,
    catalog: PromptCatalog,
}

fn prepare(plan: &ExperimentPlan) -> Result<Prepared, RunnerError> {
    plan.validate()?;
    let cells = expand_plan(plan)?;
    let catalog = match &plan.templates {
        Some(path) => PromptCatalog::with_overrides(&plan.base_dir.join(path))?,
        None => PromptCatalog::bundled(),
    };
    // Render every prompt up front so a bad template fails before any call.
    for &language in &plan.languages {
        for &upper in &plan.ranges {
            catalog.render(language, upper)?;
        }
    }
    let mut providers = BTreeMap::new();
    for config in &plan.providers {
        let p = Provider::from_config(config, &plan.base_dir, plan.seed)?;
        providers.insert(config.name.clone(), Arc::new(p));
    }
    Ok(Prepared {
        cells,
        providers,
        catalog,
    })
}

struct Shared {
    queue: Mutex<VecDeque<Cell>>,
    budget: Option<AtomicU64>,
    abort: AtomicBool,
    summary: Mutex<RunSummary>,
    failure: Mutex<Option<RunnerError>>,
}

impl Shared {
    fn take_budget(&self) -> bool {
        match &self.budget {
            None => true,
            Some(b) => b
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok(),
        }
    }
}

fn execute(
    plan: &ExperimentPlan,
    store: &Store,
    prepared: Prepared,
    options: &RunOptions,
) -> Result<RunSummary, RunnerError> {
    let started = Instant::now();
    let Prepared {
        cells,
        providers,
        catalog,
    } = prepared;
    let workers = options
        .workers
        .unwrap_or_else(|| providers.values().map(|p| p.config().max_in_flight).sum())
        .clamp(1, cells.len().max(1));
    let shared = Shared {
        queue: Mutex::new(cells.iter().cloned().collect()),
        budget: options.max_new_calls.map(AtomicU64::new),
        abort: AtomicBool::new(false),
        summary: Mutex::new(RunSummary {
            cells_total: cells.len(),
            ..RunSummary::default()
        }),
        failure: Mutex::new(None),
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if shared.abort.load(Ordering::SeqCst) {
                    break;
                }
                let Some(cell) = shared.queue.lock().unwrap_or_else(|e| e.into_inner()).pop_front() else {
                    break;
                };
                let provider = &providers[&cell.provider];
                if let Err(err) = run_cell(plan, store, &cell, provider, &catalog, &shared) {
                    shared.abort.store(true, Ordering::SeqCst);
                    shared
                        .failure
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .get_or_insert(err);
                    break;
                }
            });
        }
    });

    if let Some(err) = shared.failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(err);
    }
    let mut summary = shared.summary.into_inner().unwrap_or_else(|e| e.into_inner());
    summary.wall_time_ms = started.elapsed().as_millis() as u64;
    Ok(summary)
}

fn run_cell(
    plan: &ExperimentPlan,
    store: &Store,
    cell: &Cell,
    provider: &Provider,
    catalog: &PromptCatalog,
    shared: &Shared,
) -> Result<(), RunnerError> {
    let mut writer = store.open_cell(cell)?;
    let missing = writer.missing(plan.calls_per_cell);
    let existing = plan.calls_per_cell - missing.len() as u64;
    shared.summary.lock().unwrap_or_else(|e| e.into_inner()).calls_existing += existing;
    let prompt = catalog.render(cell.language, cell.range_upper)?;
    let request = provider.request_for(prompt, cell.temperature);

    let mut done = existing;
    for call_index in missing {
        if shared.abort.load(Ordering::SeqCst) || !shared.take_budget() {
            return Ok(());
        }
        let origin = CallOrigin {
            language: cell.language,
            range_upper: cell.range_upper,
            temperature: cell.temperature,
            call_index,
        };
        let outcome = provider.complete(&request, &origin);
        let timestamp = Utc::now();
        let (record, entry) = match outcome {
            Ok(resp) => {
                let parsed = parse_output(&resp.text, cell.range_upper);
                let record = CallRecord {
                    call_index,
                    timestamp,
                    status: parsed.status,
                    parsed_value: parsed.value,
                    think_present: parsed.think_text.is_some(),
                    raw_text: resp.text.clone(),
                };
                let entry = TranscriptEntry {
                    call_index,
                    timestamp,
                    status: parsed.status,
                    parsed_value: parsed.value,
                    raw_text: resp.text,
                    think_text: parsed.think_text,
                    error: None,
                    attempts: resp.attempts,
                    latency_ms: resp.latency_ms,
                };
                (record, entry)
            }
            Err(err) => {
                log::warn!("{cell} call {call_index}: {err}");
                let record = CallRecord {
                    call_index,
                    timestamp,
                    status: CallStatus::ProviderError,
                    parsed_value: None,
                    think_present: false,
                    raw_text: String::new(),
                };
                let entry = TranscriptEntry {
                    call_index,
                    timestamp,
                    status: CallStatus::ProviderError,
                    parsed_value: None,
                    raw_text: String::new(),
                    think_text: None,
                    error: Some(err.to_string()),
                    attempts: 0,
                    latency_ms: 0,
                };
                (record, entry)
            }
        };
        writer.append(&record, &entry)?;
        done += 1;
        let mut s = shared.summary.lock().unwrap_or_else(|e| e.into_inner());
        s.calls_new += 1;
        *s.statuses.entry(record.status).or_default() += 1;
        if record.status == CallStatus::ProviderError {
            s.calls_error += 1;
        }
    }
    if done >= plan.calls_per_cell {
        shared.summary.lock().unwrap_or_else(|e| e.into_inner()).cells_completed += 1;
    }
    Ok(())
}
