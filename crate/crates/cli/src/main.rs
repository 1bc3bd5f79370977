use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rngaudit_core::cot::{aggregate_strategies, analyze_store, CotAnalyzer, CotError, COT_CSV_HEADER};
use rngaudit_core::report::{
    aggregate_table, distribution_csv, distribution_summary, heatmap_matrix, read_stats_csv, render_heatmap_svg,
    summarize_store, write_stats_csv, GroupBy, Metric, Normalization, ReportError, SummaryOptions,
};
use rngaudit_core::runner::{self, ExperimentPlan, RunOptions, RunSummary, RunnerError, Store};
use rngaudit_core::stats::{baseline_uniform_runs, summarize_baseline, EntropyBase, StatsError};
use rngaudit_core::Language;

#[derive(Parser)]
#[command(
    name = "rngaudit",
    version,
    about = "Audit how random a model's \"random numbers\" are"
)]
struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a new run described by a plan file.
    Run(RunArgs),
    /// Continue an interrupted run.
    Resume(RunArgs),
    /// Per-cell statistics for a store.
    Analyze {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Divide entropy by log2 of the distinct observed values or of the range size.
        #[arg(long, value_enum, default_value = "observed")]
        entropy_base: EntropyArg,
        /// Minimum share of in-range parses for a cell to be reported.
        #[arg(long, default_value_t = 0.5)]
        min_valid: f64,
    },
    #[command(subcommand)]
    Report(ReportCommand),
    /// Seeded uniform-generator reference runs.
    Baseline {
        #[arg(long)]
        range: u64,
        #[arg(long, default_value_t = 100)]
        samples: u64,
        #[arg(long, default_value_t = 100)]
        runs: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify reasoning strategies in think blocks.
    Cot {
        #[arg(long)]
        store: PathBuf,
        /// Pattern table; the bundled one when omitted.
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one row per trace here.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Stop after this many new calls.
    #[arg(long)]
    max_calls: Option<u64>,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Provider × language table of a metric averaged over temperatures.
    Table {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long, default_value = "ri")]
        metric: String,
        /// Only cells with this range.
        #[arg(long)]
        range: Option<u64>,
        /// `.md` for markdown, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Value frequency by temperature for one provider, language and range.
    Heatmap {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        provider: String,
        #[arg(long)]
        language: String,
        #[arg(long)]
        range: u64,
        #[arg(long, default_value = "abs")]
        norm: String,
        /// `.svg` for an image, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Box-plot numbers per group.
    Violin {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "provider")]
        group_by: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EntropyArg {
    Observed,
    Range,
}

/// Error classes, one per non-zero exit code.
#[derive(Debug)]
enum Failure {
    /// Exit 1.
    Usage(String),
    /// Exit 2.
    Provider(String),
    /// Exit 3.
    Storage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Provider(_) => 2,
            Failure::Storage(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Provider(m) | Failure::Storage(m) => m,
        }
    }
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        let m = e.to_string();
        match e {
            RunnerError::Storage { .. } | RunnerError::Corrupt { .. } => Failure::Storage(m),
            RunnerError::Gateway(_) => Failure::Provider(m),
            _ => Failure::Usage(m),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Store(e) => e.into(),
            ReportError::Parse { .. } => Failure::Storage(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<CotError> for Failure {
    fn from(e: CotError) -> Self {
        match e {
            CotError::Io { .. } => Failure::Storage(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn write_out(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
    let fail = |e: std::io::Error| Failure::Storage(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(fail)?);
    body(&mut w).map_err(fail)?;
    w.flush().map_err(fail)
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn print_summary(s: &RunSummary) {
    let statuses: Vec<String> = s.statuses.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "cells {}/{} complete, {} new calls ({}), {} already stored, {} ms",
        s.cells_completed,
        s.cells_total,
        s.calls_new,
        statuses.join(" "),
        s.calls_existing,
        s.wall_time_ms
    );
}

fn run_or_resume(args: &RunArgs, resume: bool) -> Result<(), Failure> {
    let plan = ExperimentPlan::load(&args.config)?;
    let opts = RunOptions {
        workers: args.workers,
        max_new_calls: args.max_calls,
    };
    let summary = if resume {
        runner::resume(&plan, &args.store, &opts)?
    } else {
        runner::run(&plan, &args.store, &opts)?
    };
    print_summary(&summary);
    if summary.calls_error > 0 {
        return Err(Failure::Provider(format!(
            "{} calls failed at the provider and were recorded as provider_error",
            summary.calls_error
        )));
    }
    Ok(())
}

fn baseline(range: u64, samples: u64, runs: u64, seed: u64, out: &Path) -> Result<(), Failure> {
    let stats = baseline_uniform_runs(range, samples, runs, seed)?;
    write_out(out, |w| {
        writeln!(
            w,
            "run,n,unique_count,chi2,dof,p_value,cramers_v,h_norm,randomness_index"
        )?;
        for (i, s) in stats.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{},{},{},{},{}",
                s.n_ok, s.unique_count, s.chi2, s.dof, s.p_value, s.cramers_v, s.h_norm, s.randomness_index
            )?;
        }
        Ok(())
    })?;
    if let Some(sum) = summarize_baseline(&stats) {
        println!(
            "{} runs of {samples} draws in 1-{range}: p = {:.3} ± {:.3}, V = {:.3} ± {:.3}, RI = {:.3} ± {:.3}",
            sum.runs,
            sum.p_value.mean,
            sum.p_value.std,
            sum.cramers_v.mean,
            sum.cramers_v.std,
            sum.randomness_index.mean,
            sum.randomness_index.std
        );
    }
    Ok(())
}

fn cot(store: &Path, patterns: Option<&Path>, out: &Path, traces: Option<&Path>) -> Result<(), Failure> {
    let analyzer = match patterns {
        Some(p) => CotAnalyzer::from_path(p)?,
        None => CotAnalyzer::bundled(),
    };
    let rows = analyze_store(&analyzer, &Store::new(store))?;
    if let Some(path) = traces {
        write_out(path, |w| {
            writeln!(w, "{COT_CSV_HEADER}")?;
            rows.iter().try_for_each(|r| writeln!(w, "{}", r.to_csv_line()))
        })?;
    }
    let analyses: Vec<_> = rows.into_iter().map(|r| r.analysis).collect();
    let mut body = String::from("kind,key,count,fraction\n");
    match aggregate_strategies(&analyses) {
        Ok(f) => {
            let _ = writeln!(body, "traces,all,{},1", f.n_traces);
            for (label, frac) in &f.labels {
                let _ = writeln!(body, "strategy,{label},{},{frac}", f.label_counts[label]);
            }
            for (lang, frac) in &f.languages {
                let count = (frac * f.n_traces as f64).round();
                let _ = writeln!(body, "language,{lang},{count},{frac}");
            }
            let mismatches = (f.mismatch_rate * f.n_traces as f64).round();
            let _ = writeln!(body, "mismatch,final_vs_emitted,{mismatches},{}", f.mismatch_rate);
        }
        Err(CotError::EmptyAggregate) => {
            log::warn!("no think blocks in {}", store.display());
            body.push_str("traces,all,0,0\n");
        }
        Err(e) => return Err(e.into()),
    }
    write_out(out, |w| w.write_all(body.as_bytes()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => run_or_resume(&args, false),
        Command::Resume(args) => run_or_resume(&args, true),
        Command::Analyze {
            store,
            out,
            entropy_base,
            min_valid,
        } => {
            if !(0.0..=1.0).contains(&min_valid) {
                return Err(Failure::Usage(format!(
                    "--min-valid must be within [0, 1], got {min_valid}"
                )));
            }
            let opts = SummaryOptions {
                min_valid_fraction: min_valid,
                entropy_base: match entropy_base {
                    EntropyArg::Observed => EntropyBase::DistinctObserved,
                    EntropyArg::Range => EntropyBase::RangeSize,
                },
            };
            let summaries = summarize_store(&Store::new(&store), &opts)?;
            let absent = summaries.iter().filter(|s| !s.is_present()).count();
            write_out(&out, |w| write_stats_csv(&summaries, w))?;
            println!("{} cells, {absent} absent", summaries.len());
            Ok(())
        }
        Command::Report(ReportCommand::Table {
            stats,
            metric,
            range,
            out,
        }) => {
            let metric: Metric = metric.parse()?;
            let text = fs::read_to_string(&stats)
                .map_err(|e| Failure::Storage(format!("cannot read {}: {e}", stats.display())))?;
            let mut cells = read_stats_csv(&text)?;
            if let Some(r) = range {
                cells.retain(|c| c.cell.range_upper == r);
            }
            let table = aggregate_table(&cells, metric)?;
            let body = if has_ext(&out, "md") {
                table.to_markdown()
            } else {
                table.to_csv()
            };
            write_out(&out, |w| w.write_all(body.as_bytes()))
        }
        Command::Report(ReportCommand::Heatmap {
            store,
            provider,
            language,
            range,
            norm,
            out,
        }) => {
            let language: Language = language.parse().map_err(|e| Failure::Usage(format!("{e}")))?;
            let norm: Normalization = norm.parse()?;
            let cells = Store::new(&store).scan()?;
            let m = heatmap_matrix(&cells, &provider, language, range)?;
            let body = if has_ext(&out, "svg") {
                render_heatmap_svg(&m, norm)
            } else {
                m.to_csv(norm)
            };
            write_out(&out, |w| w.write_all(body.as_bytes()))
        }
        Command::Report(ReportCommand::Violin { store, group_by, out }) => {
            let by: GroupBy = group_by.parse()?;
            let cells = Store::new(&store).scan()?;
            let summaries = distribution_summary(&cells, by);
            write_out(&out, |w| w.write_all(distribution_csv(&summaries).as_bytes()))
        }
        Command::Baseline {
            range,
            samples,
            runs,
            seed,
            out,
        } => baseline(range, samples, runs, seed, &out),
        Command::Cot {
            store,
            patterns,
            out,
            traces,
        } => cot(&store, patterns.as_deref(), &out, traces.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
