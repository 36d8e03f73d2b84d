mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qualimeter_core::aggregation::AggregationOperator;
use qualimeter_core::diversity::DistanceMode;

/// Hierarchical quality models, measurement ingestion and evaluation.
#[derive(Debug, Parser)]
#[command(name = "qualimeter", version)]
struct Cli {
    /// Project directory; relative paths resolve against it.
    #[arg(long, global = true, env = "QUALIMETER_PROJECT", value_name = "DIR")]
    project: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a model and check it against the derivation rules.
    Validate(ValidateArgs),
    /// Print the canonical form of a model.
    Serialize { model: PathBuf },
    /// Evaluate a model against a record file without a plan.
    Evaluate(EvaluateArgs),
    /// Polymorphism degree of a model population.
    Diversity(DiversityArgs),
    /// Initial phase: build the measurement context from an objectives file.
    Init(InitArgs),
    /// Planning phase: bind context, model and collection settings.
    Plan(PlanArgs),
    /// Append measurement records to the plan's store.
    Ingest(IngestArgs),
    /// Execute one cycle and write reports.
    Run(RunArgs),
    /// Print a previously written report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TextOrJson {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Md,
    Detailed,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    model: PathBuf,
    /// Rule overrides, one `RULE.param=value` per line.
    #[arg(long)]
    ruleset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    records: PathBuf,
    #[arg(long, value_parser = parse_ts)]
    as_of: DateTime<Utc>,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
    /// Override the model's aggregation operator.
    #[arg(long, value_parser = parse_operator)]
    operator: Option<AggregationOperator>,
    /// Forecast horizon for prediction models.
    #[arg(long, default_value = "24h", value_parser = humantime::parse_duration)]
    horizon: std::time::Duration,
    #[arg(long)]
    ruleset: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiversityArgs {
    #[arg(long)]
    population: PathBuf,
    #[arg(long, default_value = "structural", value_parser = parse_mode)]
    mode: DistanceMode,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
}

#[derive(Debug, Args)]
struct InitArgs {
    #[arg(long)]
    objectives: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    context: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Collection frequency, e.g. `24h` or `7d`.
    #[arg(long)]
    frequency: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "development")]
    lifecycle: String,
    #[arg(long, value_parser = parse_operator)]
    operator: Option<AggregationOperator>,
    #[arg(long)]
    ruleset: Option<PathBuf>,
    /// Free-text analysis criteria; repeatable.
    #[arg(long = "criteria")]
    criteria: Vec<String>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Record file, or `-` for stdin.
    #[arg(long)]
    records: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, value_parser = parse_ts)]
    as_of: DateTime<Utc>,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Most recent report (the default).
    #[arg(long, conflicts_with = "as_of")]
    latest: bool,
    /// Report written for this evaluation time.
    #[arg(long, value_parser = parse_ts)]
    as_of: Option<DateTime<Utc>>,
    #[arg(long, value_enum, default_value = "md")]
    format: ReportFormat,
}

fn parse_ts(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("expected an RFC 3339 timestamp such as 2026-01-01T00:00:00Z ({e})"))
}

fn parse_operator(s: &str) -> Result<AggregationOperator, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = AggregationOperator::ALL.iter().map(|o| o.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_mode(s: &str) -> Result<DistanceMode, String> {
    s.parse().map_err(|_| "expected structural or weighted".to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let ctx = commands::Ctx::new(cli.project);
    let result = match cli.command {
        Command::Validate(a) => commands::validate(&ctx, a),
        Command::Serialize { model } => commands::serialize(&ctx, &model),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Diversity(a) => commands::diversity(&ctx, a),
        Command::Init(a) => commands::init(&ctx, a),
        Command::Plan(a) => commands::plan(&ctx, a),
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Run(a) => commands::run(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    };
    match result {
        Ok(code) => code.into(),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code.into()
        }
    }
}
