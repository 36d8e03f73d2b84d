//! The three-phase measurement process: an initial phase consolidating
//! objectives and context, a planning phase producing the evaluation plan, and
//! an execution phase that collects, stores, analyzes and reports.

mod context;
mod execute;
mod plan;
mod project;
mod store;
mod trend;

use std::path::PathBuf;

use thiserror::Error;

use crate::aggregation::AggregationError;
use crate::qmdl::QmdlError;
use crate::rules::{RuleError, RuleViolation};

pub use context::{init_phase, parse_objectives_file, ContextFields, MeasurementContext, Objective, ObjectivesInput};
pub use execute::{
    evaluate_records, execute_cycle, Evaluation, EvaluationReport, MetricProvenance, PredictionSection, SelectedRecord,
};
pub use plan::{
    content_hash, iso25040_coverage, plan_phase, AnalysisSettings, CollectionSettings, EvaluationPlan, IsoActivity,
    ModelRef, Phase, PlanSettings, ProcessTask,
};
pub use project::{report_dir_name, Project, ReportPaths};
pub use store::{
    ingest, parse_record_line, Diagnostic, IngestOutcome, MeasurementRecord, RecordIssue, RecordStore, StoredRecord,
};
pub use trend::{predict_trend, Trend};

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("at least one measurement objective is required")]
    NoObjectives,
    #[error("duplicate objective id `{0}`")]
    DuplicateObjectiveId(String),
    #[error("line {line}: {reason}")]
    ObjectivesFile { line: usize, reason: String },
    #[error("model has {} blocking rule violation(s)", .0.len())]
    ModelRuleViolations(Vec<RuleViolation>),
    #[error("invalid collection frequency `{0}`: expected a positive duration such as 24h")]
    InvalidFrequency(String),
    #[error("invalid lifecycle stage `{0}`: expected [A-Za-z0-9_-]+")]
    InvalidLifecycleStage(String),
    #[error("record store {path} is not writable: {source}")]
    StoreUnwritable { path: PathBuf, source: std::io::Error },
    #[error("model hash mismatch: plan expects {expected}, model file hashes to {actual}")]
    ModelHashMismatch { expected: String, actual: String },
    #[error("trend prediction needs at least two distinct timestamps")]
    InsufficientHistory,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("no report found under {0}")]
    NoReport(PathBuf),
    #[error("{path}: {source}")]
    Qmdl { path: PathBuf, source: QmdlError },
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Rules(#[from] RuleError),
}

impl ProcessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ProcessError::Io {
            path: path.into(),
            source,
        }
    }
}
