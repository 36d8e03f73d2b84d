//! On-disk project layout. A project is the directory holding `plan.json`:
//!
//! ```text
//! plan.json
//! models/<model-id>.qmdl
//! measurements/records.jsonl
//! reports/<as-of>/{dashboard.json,summary.md,detailed.json}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use super::execute::{execute_cycle, EvaluationReport};
use super::plan::EvaluationPlan;
use super::store::RecordStore;
use super::ProcessError;
use crate::model::QualityModel;
use crate::qmdl::{parse_qmdl, serialize_qmdl};

pub(crate) const RECORDS_PATH: &str = "measurements/records.jsonl";
const PLAN_FILE: &str = "plan.json";
const MODELS_DIR: &str = "models";
const REPORTS_DIR: &str = "reports";

/// Directory name for a report; sorts chronologically.
pub fn report_dir_name(as_of: DateTime<Utc>) -> String {
    as_of.format("%Y%m%dT%H%M%S%.fZ").to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub dir: PathBuf,
    pub dashboard: PathBuf,
    pub summary: PathBuf,
    pub detailed: PathBuf,
}

impl ReportPaths {
    fn in_dir(dir: PathBuf) -> Self {
        ReportPaths {
            dashboard: dir.join("dashboard.json"),
            summary: dir.join("summary.md"),
            detailed: dir.join("detailed.json"),
            dir,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Project {
    root: PathBuf,
    plan_file: PathBuf,
}

fn write(path: &Path, contents: &str) -> Result<(), ProcessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| ProcessError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| ProcessError::io(path, e))
}

impl Project {
    /// A project rooted at `root` with the default plan file name.
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Project {
            plan_file: root.join(PLAN_FILE),
            root,
        }
    }

    /// The project whose plan lives at `plan_file`; the root is its directory.
    pub fn from_plan_path(plan_file: impl Into<PathBuf>) -> Self {
        let plan_file = plan_file.into();
        let root = match plan_file.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        Project { root, plan_file }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn plan_file(&self) -> &Path {
        &self.plan_file
    }

    /// Project-relative path where `model` is installed.
    pub fn model_rel_path(model: &QualityModel) -> String {
        format!("{MODELS_DIR}/{}.qmdl", model.id())
    }

    /// Writes the canonical form of `model` under `models/` and returns the
    /// project-relative path.
    pub fn install_model(&self, model: &QualityModel) -> Result<String, ProcessError> {
        let rel = Self::model_rel_path(model);
        write(&self.root.join(&rel), &serialize_qmdl(model))?;
        Ok(rel)
    }

    pub fn write_plan(&self, plan: &EvaluationPlan) -> Result<(), ProcessError> {
        let mut text = serde_json::to_string_pretty(plan).expect("plan serializes");
        text.push('\n');
        write(&self.plan_file, &text)
    }

    pub fn load_plan(&self) -> Result<EvaluationPlan, ProcessError> {
        let text = fs::read_to_string(&self.plan_file).map_err(|e| ProcessError::io(&self.plan_file, e))?;
        serde_json::from_str(&text).map_err(|source| ProcessError::Json {
            path: self.plan_file.clone(),
            source,
        })
    }

    pub fn load_model(&self, plan: &EvaluationPlan) -> Result<QualityModel, ProcessError> {
        let path = self.root.join(&plan.model_ref.path);
        let text = fs::read_to_string(&path).map_err(|e| ProcessError::io(&path, e))?;
        parse_qmdl(&text).map_err(|source| ProcessError::Qmdl { path, source })
    }

    pub fn store(&self, plan: &EvaluationPlan) -> RecordStore {
        RecordStore::new(self.root.join(&plan.collection.storage_path))
    }

    pub fn report_paths(&self, as_of: DateTime<Utc>) -> ReportPaths {
        ReportPaths::in_dir(self.root.join(REPORTS_DIR).join(report_dir_name(as_of)))
    }

    /// Executes one cycle and writes its three reports. Re-running with the
    /// same `as_of` and store contents rewrites identical bytes.
    pub fn run(&self, as_of: DateTime<Utc>) -> Result<(EvaluationReport, ReportPaths), ProcessError> {
        let plan = self.load_plan()?;
        let model = self.load_model(&plan)?;
        let report = execute_cycle(&plan, &model, &self.store(&plan), as_of)?;
        let paths = self.report_paths(as_of);
        write(&paths.dashboard, &report.dashboard_json())?;
        write(&paths.summary, &report.summary_md())?;
        write(&paths.detailed, &report.detailed_json())?;
        Ok((report, paths))
    }

    /// The most recent report by `as_of`.
    pub fn latest_report(&self) -> Result<ReportPaths, ProcessError> {
        let dir = self.root.join(REPORTS_DIR);
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ProcessError::NoReport(dir)),
            Err(e) => return Err(ProcessError::io(&dir, e)),
        };
        let mut latest: Option<PathBuf> = None;
        for entry in entries {
            let entry = entry.map_err(|e| ProcessError::io(&dir, e))?;
            let path = entry.path();
            if path.join("detailed.json").is_file() && latest.as_ref().is_none_or(|l| path > *l) {
                latest = Some(path);
            }
        }
        latest.map(ReportPaths::in_dir).ok_or(ProcessError::NoReport(dir))
    }
}
