//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use recoin_core::index::{format_fixed2, format_percent};
use recoin_core::snapshot::Snapshot;
use recoin_core::stats::{DEFAULT_ROUNDS, DEFAULT_SEED};
use recoin_core::{completeness, CompletenessReport, Condition, CoreError, IndexConfig, WhatIfQuery, DEFAULT_LIMIT};
use serde::Serialize;

use crate::analytics::{analyze, PMethod};
use crate::dump::{load_dump, LoadOptions};
use crate::error::{Error, Result};
use crate::service::{ApiConfig, RecommendationView, RecommendationsView, ReportView};
use crate::session_log::{read_csv, read_events_file, report_rows};
use crate::snapshot_file::{read_snapshot, write_snapshot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "recoin", version, about = "Relative completeness indicator for knowledge-base items")]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a line-delimited dump and write an index snapshot.
    Ingest {
        dump: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail on the first malformed line.
        #[arg(long)]
        strict: bool,
    },
    /// List the most relevant missing properties of an item.
    Recommend {
        item: String,
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LIMIT)]
        limit: usize,
    },
    /// Show an item's completeness level and score.
    Completeness {
        item: String,
        #[arg(long)]
        index: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 8080, value_parser = clap::value_parser!(u16).range(1..))]
        port: u16,
        #[arg(long, env = "RECOIN_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Directory served under /ui/.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Condition for sessions started without one.
        #[arg(long, default_value = "C4", value_parser = parse_condition)]
        condition: Condition,
        /// Allowed CORS origin (repeatable).
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
    },
    /// Statistics over collected self-reports (CSV export or session log).
    Analyze {
        sessions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ROUNDS)]
        rounds: u64,
        /// Use distributional approximations instead of permutations.
        #[arg(long)]
        large_sample: bool,
    },
}

fn parse_condition(s: &str) -> std::result::Result<Condition, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Ingest { dump, out: target, strict } => ingest(&dump, &target, strict, cli.format, out, err),
        Command::Recommend { item, index, limit } => {
            let snap = read_snapshot(&index)?;
            let report = report(&snap, &item)?;
            render_recommendations(&report, limit, cli.format, out)
        }
        Command::Completeness { item, index } => {
            let snap = read_snapshot(&index)?;
            let report = report(&snap, &item)?;
            render_completeness(&report, cli.format, out)
        }
        Command::Serve {
            index,
            port,
            data_dir,
            bind,
            ui_dir,
            condition,
            cors_origins,
        } => {
            let snapshot = read_snapshot(&index)?;
            let config = ApiConfig {
                bind,
                port,
                data_dir,
                index_path: index,
                default_condition: condition,
                cors_allowlist: cors_origins,
                ui_dir,
            };
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(crate::service::serve(config, snapshot))
        }
        Command::Analyze {
            sessions,
            seed,
            rounds,
            large_sample,
        } => {
            let rows = if sessions.extension().is_some_and(|e| e == "jsonl") {
                report_rows(&read_events_file(&sessions)?)
            } else {
                let file = File::open(&sessions).map_err(|e| Error::io(&sessions, e))?;
                read_csv(BufReader::new(file))?
            };
            if rounds == 0 && !large_sample {
                return Err(CoreError::Validation("--rounds must be positive".into()).into());
            }
            let method = if large_sample {
                PMethod::LargeSample
            } else {
                PMethod::Permutation { rounds, seed }
            };
            let analysis = analyze(&rows, method);
            match cli.format {
                Format::Text => out.write_all(analysis.render_text().as_bytes())?,
                Format::Json => write_json(out, &analysis)?,
            }
            Ok(())
        }
    }
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn report(snap: &Snapshot, item: &str) -> Result<CompletenessReport> {
    let entity = snap
        .store
        .get(item)
        .ok_or_else(|| CoreError::NotFound(format!("item {item}")))?;
    Ok(completeness(entity, &snap.index, &WhatIfQuery::default())?)
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    loaded: usize,
    skipped: usize,
    duplicates: usize,
    classes: usize,
    index_fingerprint: &'a str,
    out: &'a Path,
}

fn ingest(dump: &Path, target: &Path, strict: bool, format: Format, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let file = File::open(dump).map_err(|e| Error::io(dump, e))?;
    let (store, load) = load_dump(BufReader::with_capacity(1 << 20, file), LoadOptions { strict })?;
    for (line, e) in &load.errors {
        writeln!(err, "warning: line {line}: {e}")?;
    }
    if load.skipped > load.errors.len() {
        writeln!(err, "warning: {} more bad lines not shown", load.skipped - load.errors.len())?;
    }
    let snap = Snapshot::build(store, &IndexConfig::default());
    write_snapshot(target, &snap)?;
    let summary = IngestSummary {
        loaded: load.loaded,
        skipped: load.skipped,
        duplicates: load.duplicates,
        classes: snap.index.classes().len(),
        index_fingerprint: snap.fingerprint(),
        out: target,
    };
    match format {
        Format::Json => write_json(out, &summary),
        Format::Text => {
            writeln!(
                out,
                "loaded {} entities ({} skipped, {} duplicates) in {} classes",
                summary.loaded, summary.skipped, summary.duplicates, summary.classes
            )?;
            writeln!(out, "fingerprint {}", summary.index_fingerprint)?;
            writeln!(out, "wrote {}", target.display())?;
            Ok(())
        }
    }
}

/// One line per recommendation: `P2 75.00% (3 of 4 QAST)`.
pub fn render_recommendations(report: &CompletenessReport, limit: usize, format: Format, out: &mut dyn Write) -> Result<()> {
    let recs: Vec<RecommendationView> = report.missing.iter().take(limit).map(Into::into).collect();
    match format {
        Format::Json => write_json(
            out,
            &RecommendationsView {
                item: report.item.clone(),
                recommendations: recs,
                index_fingerprint: report.index_fingerprint.clone(),
            },
        ),
        Format::Text => {
            if report.missing.is_empty() {
                writeln!(out, "item is complete relative to its class")?;
            }
            for r in &recs {
                writeln!(out, "{} {} ({} of {} {})", r.property, r.relevance_display, r.count, r.class_size, r.class)?;
            }
            Ok(())
        }
    }
}

pub fn render_completeness(report: &CompletenessReport, format: Format, out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Json => write_json(out, &ReportView::from(report)),
        Format::Text => {
            let classes: Vec<&str> = report.classes_used.iter().map(|c| c.as_str()).collect();
            let classes = if classes.is_empty() { "-".to_owned() } else { classes.join(", ") };
            let via = if report.via_occupation { " (by occupation)" } else { "" };
            writeln!(out, "item {}", report.item)?;
            writeln!(out, "classes {classes}{via}")?;
            writeln!(out, "level {} ({})", report.level, report.level_label)?;
            writeln!(out, "score {}", format_fixed2(report.score))?;
            writeln!(out, "top-5 missing relevance {}", format_percent(report.avg_top5_missing))?;
            writeln!(out, "missing {}", report.missing.len())?;
            Ok(())
        }
    }
}
