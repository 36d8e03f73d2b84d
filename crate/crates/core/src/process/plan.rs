//! Planning phase: turns the measurement context and a validated model into
//! an evaluation plan, and checks that the plan's task structure subsumes the
//! five-activity evaluation process of ISO/IEC 25040.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::context::MeasurementContext;
use super::ProcessError;
use crate::aggregation::AggregationOperator;
use crate::model::{is_valid_name, Organization, QualityModel};
use crate::qmdl::serialize_qmdl;
use crate::rules::{self, Ruleset, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Initial,
    Planning,
    Execution,
}

/// Tasks of the three-phase process, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessTask {
    IdentifyObjectives,
    DefineContext,
    ProcessImprovement,
    SpecifyQualityModel,
    PlanCollectionStorage,
    PlanAnalysisCriteria,
    SynthesizeEvaluationPlan,
    CollectData,
    StoreData,
    AnalyzeAssess,
    ReportCommunicate,
}

impl ProcessTask {
    pub const ALL: [ProcessTask; 11] = [
        ProcessTask::IdentifyObjectives,
        ProcessTask::DefineContext,
        ProcessTask::ProcessImprovement,
        ProcessTask::SpecifyQualityModel,
        ProcessTask::PlanCollectionStorage,
        ProcessTask::PlanAnalysisCriteria,
        ProcessTask::SynthesizeEvaluationPlan,
        ProcessTask::CollectData,
        ProcessTask::StoreData,
        ProcessTask::AnalyzeAssess,
        ProcessTask::ReportCommunicate,
    ];

    pub fn phase(self) -> Phase {
        use ProcessTask::*;
        match self {
            IdentifyObjectives | DefineContext | ProcessImprovement => Phase::Initial,
            SpecifyQualityModel | PlanCollectionStorage | PlanAnalysisCriteria | SynthesizeEvaluationPlan => {
                Phase::Planning
            }
            CollectData | StoreData | AnalyzeAssess | ReportCommunicate => Phase::Execution,
        }
    }
}

/// The five activities of the ISO/IEC 25040 evaluation process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsoActivity {
    EstablishRequirements,
    SpecifyEvaluation,
    DesignEvaluation,
    ExecuteEvaluation,
    ConcludeEvaluation,
}

impl IsoActivity {
    pub const ALL: [IsoActivity; 5] = [
        IsoActivity::EstablishRequirements,
        IsoActivity::SpecifyEvaluation,
        IsoActivity::DesignEvaluation,
        IsoActivity::ExecuteEvaluation,
        IsoActivity::ConcludeEvaluation,
    ];

    /// The phase whose tasks subsume this activity.
    pub fn phase(self) -> Phase {
        match self {
            IsoActivity::EstablishRequirements => Phase::Initial,
            IsoActivity::SpecifyEvaluation | IsoActivity::DesignEvaluation => Phase::Planning,
            IsoActivity::ExecuteEvaluation | IsoActivity::ConcludeEvaluation => Phase::Execution,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IsoActivity::EstablishRequirements => "establish-requirements",
            IsoActivity::SpecifyEvaluation => "specify-evaluation",
            IsoActivity::DesignEvaluation => "design-evaluation",
            IsoActivity::ExecuteEvaluation => "execute-evaluation",
            IsoActivity::ConcludeEvaluation => "conclude-evaluation",
        }
    }
}

impl fmt::Display for IsoActivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn standard_iso_map() -> BTreeMap<ProcessTask, IsoActivity> {
    use IsoActivity::*;
    use ProcessTask::*;
    BTreeMap::from([
        (IdentifyObjectives, EstablishRequirements),
        (DefineContext, EstablishRequirements),
        (SpecifyQualityModel, SpecifyEvaluation),
        (PlanAnalysisCriteria, SpecifyEvaluation),
        (PlanCollectionStorage, DesignEvaluation),
        (SynthesizeEvaluationPlan, DesignEvaluation),
        (CollectData, ExecuteEvaluation),
        (StoreData, ExecuteEvaluation),
        (AnalyzeAssess, ExecuteEvaluation),
        (ReportCommunicate, ConcludeEvaluation),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRef {
    pub id: String,
    /// Model file, relative to the project directory.
    pub path: String,
    /// Lowercase hex SHA-256 of the canonical QMDL text.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionSettings {
    pub frequency: String,
    pub frequency_seconds: u64,
    pub storage_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_override: Option<AggregationOperator>,
    #[serde(default)]
    pub criteria_notes: Vec<String>,
    pub ruleset: Ruleset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub plan_id: String,
    pub context: MeasurementContext,
    pub model_ref: ModelRef,
    pub collection: CollectionSettings,
    pub analysis: AnalysisSettings,
    pub lifecycle_stage: String,
    pub tasks: Vec<ProcessTask>,
    pub iso25040_map: BTreeMap<ProcessTask, IsoActivity>,
    pub created_at: DateTime<Utc>,
}

impl EvaluationPlan {
    pub fn operator_for(&self, model: &QualityModel) -> AggregationOperator {
        self.analysis.operator_override.unwrap_or(model.aggregation())
    }

    pub fn horizon(&self) -> chrono::Duration {
        chrono::Duration::seconds(self.collection.frequency_seconds as i64)
    }
}

/// Planning inputs besides the context and model.
#[derive(Debug, Clone)]
pub struct PlanSettings {
    pub model_path: String,
    pub lifecycle_stage: String,
    pub frequency: String,
    pub storage_path: String,
    pub operator_override: Option<AggregationOperator>,
    pub criteria_notes: Vec<String>,
    pub ruleset: Ruleset,
}

impl PlanSettings {
    pub fn new(model_path: impl Into<String>, frequency: impl Into<String>) -> Self {
        PlanSettings {
            model_path: model_path.into(),
            lifecycle_stage: "development".into(),
            frequency: frequency.into(),
            storage_path: super::project::RECORDS_PATH.into(),
            operator_override: None,
            criteria_notes: Vec::new(),
            ruleset: rules::default_ruleset(),
        }
    }
}

pub fn content_hash(model: &QualityModel) -> String {
    hex::encode(Sha256::digest(serialize_qmdl(model).as_bytes()))
}

fn parse_frequency(text: &str) -> Result<u64, ProcessError> {
    let d = humantime::parse_duration(text.trim()).map_err(|_| ProcessError::InvalidFrequency(text.into()))?;
    match d.as_secs() {
        0 => Err(ProcessError::InvalidFrequency(text.into())),
        s => Ok(s),
    }
}

pub fn plan_phase(
    context: &MeasurementContext,
    model: &QualityModel,
    settings: PlanSettings,
    created_at: DateTime<Utc>,
) -> Result<EvaluationPlan, ProcessError> {
    if model.organization() != Organization::Hierarchical {
        return Err(crate::aggregation::AggregationError::UnsupportedOrganization(model.organization()).into());
    }
    let errors: Vec<_> = rules::check(model, &settings.ruleset)?
        .into_iter()
        .filter(|v| v.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(ProcessError::ModelRuleViolations(errors));
    }
    if !is_valid_name(&settings.lifecycle_stage) {
        return Err(ProcessError::InvalidLifecycleStage(settings.lifecycle_stage));
    }
    let frequency_seconds = parse_frequency(&settings.frequency)?;

    let mut plan = EvaluationPlan {
        plan_id: String::new(),
        context: context.clone(),
        model_ref: ModelRef {
            id: model.id().to_string(),
            path: settings.model_path,
            hash: content_hash(model),
        },
        collection: CollectionSettings {
            frequency: settings.frequency.trim().to_string(),
            frequency_seconds,
            storage_path: settings.storage_path,
        },
        analysis: AnalysisSettings {
            operator_override: settings.operator_override,
            criteria_notes: settings.criteria_notes,
            ruleset: settings.ruleset,
        },
        lifecycle_stage: settings.lifecycle_stage,
        tasks: ProcessTask::ALL.to_vec(),
        iso25040_map: standard_iso_map(),
        created_at,
    };
    plan.plan_id = plan_id(&plan);
    Ok(plan)
}

/// Content-derived id; `created_at` is deliberately left out so that
/// re-planning identical inputs yields the same id.
fn plan_id(plan: &EvaluationPlan) -> String {
    #[derive(Serialize)]
    struct Identity<'a> {
        context: &'a MeasurementContext,
        model_ref: &'a ModelRef,
        collection: &'a CollectionSettings,
        analysis: &'a AnalysisSettings,
        lifecycle_stage: &'a str,
        tasks: &'a [ProcessTask],
        iso25040_map: &'a BTreeMap<ProcessTask, IsoActivity>,
    }
    let identity = Identity {
        context: &plan.context,
        model_ref: &plan.model_ref,
        collection: &plan.collection,
        analysis: &plan.analysis,
        lifecycle_stage: &plan.lifecycle_stage,
        tasks: &plan.tasks,
        iso25040_map: &plan.iso25040_map,
    };
    let bytes = serde_json::to_vec(&identity).expect("plan identity serializes");
    format!("plan-{}", &hex::encode(Sha256::digest(&bytes))[..16])
}

/// Returns the ISO activities not covered by the plan. An activity is covered
/// when some task of the plan belonging to the matching phase maps onto it.
pub fn iso25040_coverage(plan: &EvaluationPlan) -> BTreeSet<IsoActivity> {
    let tasks: BTreeSet<ProcessTask> = plan.tasks.iter().copied().collect();
    IsoActivity::ALL
        .into_iter()
        .filter(|activity| {
            !plan
                .iso25040_map
                .iter()
                .any(|(task, mapped)| mapped == activity && tasks.contains(task) && task.phase() == activity.phase())
        })
        .collect()
}
