//! Batch CLI front end: audits one canonical CSV file or a directory of
//! them and emits per-election JSON reports plus a corpus CSV summary.
//!
//! Exit codes: 0 = clean, 1 = flaws detected, 2 = I/O, parse, or config
//! error (including skipped corpus entries).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rcv_audit::ingest::{DuplicateRule, OvervoteRule, SkipRule, WriteInRule};
use rcv_audit::report::{audit_corpus, audit_file, AuditOptions, AuditReport, CorpusSummary};

/// Output directory used when --json / --summary name a bare file.
const OUT_DIR_ENV: &str = "RCV_AUDIT_OUT_DIR";

#[derive(Parser)]
#[command(name = "rcv-audit", version, about = "Forensic audit of instant-runoff elections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a canonical CSV file, or every *.csv in a directory.
    Audit(AuditArgs),
}

#[derive(Args)]
struct AuditArgs {
    /// A canonical CSV file or a directory of them.
    path: PathBuf,
    /// key=value policy file (sanitation and search-budget fields).
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Retabulation budget per search target (overrides the policy file).
    #[arg(long)]
    budget: Option<u32>,
    /// Require the all-eligible-ballots variant of the compromise test.
    #[arg(long)]
    strict_compromise: bool,
    /// Keep write-in pseudo-candidates instead of eliminating them first.
    #[arg(long)]
    no_writein_elim: bool,
    /// Write the JSON report (file input) or JSON report array (directory
    /// input) here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the corpus summary CSV here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn parse_policy_file(path: &Path, options: &mut AuditOptions) -> Result<(), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let located = |msg: String| format!("{}:{}: {msg}", path.display(), idx + 1);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| located(format!("expected key=value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let parse_num = |v: &str| {
            v.parse::<u32>()
                .map_err(|_| located(format!("{key}: expected an integer, got {v:?}")))
        };
        let bad_value =
            |choices: &str| located(format!("{key}: expected one of {choices}, got {value:?}"));
        match key {
            "overvote_rule" => {
                options.sanitation.overvote_rule = match value {
                    "truncate_at" => OvervoteRule::TruncateAt,
                    "skip_position" => OvervoteRule::SkipPosition,
                    _ => return Err(bad_value("truncate_at|skip_position")),
                }
            }
            "skip_rule" => {
                options.sanitation.skip_rule = match value {
                    "compress" => SkipRule::Compress,
                    "truncate_after_two_consecutive" => SkipRule::TruncateAfterTwoConsecutive,
                    _ => return Err(bad_value("compress|truncate_after_two_consecutive")),
                }
            }
            "duplicate_rule" => {
                options.sanitation.duplicate_rule = match value {
                    "keep_first" => DuplicateRule::KeepFirst,
                    _ => return Err(bad_value("keep_first")),
                }
            }
            "write_in_rule" => {
                options.sanitation.write_in_rule = match value {
                    "keep" => WriteInRule::Keep,
                    "eliminate_before_analysis" => WriteInRule::EliminateBeforeAnalysis,
                    _ => return Err(bad_value("keep|eliminate_before_analysis")),
                }
            }
            "max_retabulations_per_target" => {
                options.budget.max_retabulations_per_target = parse_num(value)? as usize
            }
            "spoiler_exhaustive_candidate_limit" => {
                options.budget.spoiler_exhaustive_candidate_limit = parse_num(value)? as usize
            }
            "spoiler_reduce_to" => options.budget.spoiler_reduce_to = parse_num(value)? as usize,
            _ => return Err(located(format!("unknown policy key {key:?}"))),
        }
    }
    Ok(())
}

/// Bare file names are placed in `RCV_AUDIT_OUT_DIR` when it is set;
/// explicit paths are used as given.
fn resolve_out(path: &Path) -> PathBuf {
    if path.components().count() == 1 {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
            return PathBuf::from(dir).join(path);
        }
    }
    path.to_path_buf()
}

fn write_out(path: &Path, contents: &str) -> Result<(), String> {
    let path = resolve_out(path);
    std::fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

/// Prints to stdout, ignoring a closed pipe (e.g. piping into `head`).
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn single_row_summary(report: &AuditReport) -> String {
    CorpusSummary::from_single(report.clone()).to_csv()
}

fn run_audit(args: &AuditArgs) -> Result<ExitCode, String> {
    let mut options = AuditOptions::default();
    if let Some(policy_path) = &args.policy {
        parse_policy_file(policy_path, &mut options)?;
    }
    if let Some(budget) = args.budget {
        options.budget.max_retabulations_per_target = budget as usize;
    }
    options.strict_compromise = args.strict_compromise;
    if args.no_writein_elim {
        options.sanitation.write_in_rule = WriteInRule::Keep;
    }

    if args.path.is_dir() {
        let summary = audit_corpus(&args.path, &options).map_err(|e| e.to_string())?;
        for (path, error) in &summary.errors {
            eprintln!("skipped {}: {error}", path.display());
        }
        let csv = summary.to_csv();
        emit(&csv);
        if let Some(out) = &args.summary {
            write_out(out, &csv)?;
        }
        if let Some(out) = &args.json {
            let json = serde_json::to_string_pretty(&summary.reports)
                .expect("report serialization is infallible");
            write_out(out, &json)?;
        }
        Ok(if !summary.errors.is_empty() {
            ExitCode::from(2)
        } else if summary.reports.iter().any(AuditReport::any_failure) {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        })
    } else {
        let report = audit_file(&args.path, &options).map_err(|e| e.to_string())?;
        let json = report.to_json();
        emit(&json);
        emit("\n");
        if let Some(out) = &args.json {
            write_out(out, &json)?;
        }
        if let Some(out) = &args.summary {
            write_out(out, &single_row_summary(&report))?;
        }
        Ok(if report.any_failure() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Audit(args) => match run_audit(args) {
            Ok(code) => code,
            Err(message) => {
                eprintln!("error: {message}");
                ExitCode::from(2)
            }
        },
    }
}
