//! Execution phase: select, normalize, roll up, assess, predict and report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Duration, Utc};
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use super::plan::{content_hash, EvaluationPlan};
use super::store::{format_ts, RecordStore, StoredRecord};
use super::trend::{predict_trend, Trend};
use super::ProcessError;
use crate::aggregation::{dispersion, rollup_metrics, AggregationOperator, Dispersion, ScoredNode, ScoredTree};
use crate::metrics::{normalize_value, Direction, Scale, Verdict, VerdictLevel};
use crate::model::{metric_path, Capability, QualityModel};
use crate::qmdl::format_number;
use crate::rules::Ruleset;

fn ser_ts<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_ts(ts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedRecord {
    /// Line in the record store.
    pub line: usize,
    #[serde(serialize_with = "ser_ts")]
    pub ts: DateTime<Utc>,
    pub value: f64,
    pub source: String,
}

/// Where a metric's reading came from and what it turned into.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricProvenance {
    pub leaf: String,
    pub metric: String,
    pub unit: String,
    pub scale: Scale,
    pub direction: Direction,
    /// Records at or before `as_of`.
    pub records_considered: usize,
    pub selected: Option<SelectedRecord>,
    pub indicator: Option<f64>,
    pub verdict: Option<Verdict>,
    /// Spread of the indicator over the full history up to `as_of`.
    pub dispersion: Option<Dispersion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    #[serde(serialize_with = "ser_ts")]
    pub ts: DateTime<Utc>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionSection {
    pub horizon_seconds: i64,
    /// Root score re-evaluated at every distinct record timestamp.
    pub series: Vec<SeriesPoint>,
    pub trend: Option<Trend>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    #[serde(serialize_with = "ser_ts")]
    pub as_of: DateTime<Utc>,
    pub operator: AggregationOperator,
    pub scored_tree: ScoredTree,
    pub verdict_summary: BTreeMap<String, usize>,
    /// Keyed by `leaf-path/metric-name`.
    pub metrics: BTreeMap<String, MetricProvenance>,
    pub predictions: Option<PredictionSection>,
    pub recommendations: Vec<String>,
    pub diagnostics: Vec<String>,
}

impl Evaluation {
    pub fn root_score(&self) -> Option<f64> {
        self.scored_tree.root_score()
    }
}

struct MetricHistory<'a> {
    path: String,
    leaf: String,
    spec: &'a crate::metrics::MetricSpec,
    records: Vec<&'a StoredRecord>,
}

fn histories<'a>(model: &'a QualityModel, records: &'a [StoredRecord], as_of: DateTime<Utc>) -> Vec<MetricHistory<'a>> {
    let mut by_metric: BTreeMap<&str, Vec<&StoredRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.record.ts <= as_of) {
        by_metric.entry(r.record.metric.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (leaf, node) in model.leaves() {
        for spec in &node.metrics {
            let path = metric_path(&leaf, spec.name());
            let mut recs = by_metric.remove(path.as_str()).unwrap_or_default();
            recs.sort_by(|a, b| a.record.ts.cmp(&b.record.ts).then(a.line.cmp(&b.line)));
            out.push(MetricHistory {
                path,
                leaf: leaf.clone(),
                spec,
                records: recs,
            });
        }
    }
    out
}

/// Latest usable indicator per metric at `at`.
fn indicators_at(histories: &[MetricHistory<'_>], at: DateTime<Utc>) -> BTreeMap<String, f64> {
    histories
        .iter()
        .filter_map(|h| {
            let latest = h.records.iter().rev().find(|r| r.record.ts <= at)?;
            let v = normalize_value(h.spec, latest.record.value).ok()?;
            Some((h.path.clone(), v))
        })
        .collect()
}

/// Evaluates `model` against `records` as of a point in time. Used by both
/// plan-driven cycles and ad-hoc evaluation.
pub fn evaluate_records(
    model: &QualityModel,
    records: &[StoredRecord],
    as_of: DateTime<Utc>,
    ruleset: &Ruleset,
    operator: AggregationOperator,
    horizon: Duration,
) -> Result<Evaluation, ProcessError> {
    let histories = histories(model, records, as_of);
    let indicators = indicators_at(&histories, as_of);
    let scored_tree = rollup_metrics(model, &indicators, ruleset, operator)?;

    let mut metrics = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for h in &histories {
        let mut note = None;
        let history: Vec<f64> = h
            .records
            .iter()
            .filter_map(|r| match normalize_value(h.spec, r.record.value) {
                Ok(v) => Some(v),
                Err(e) => {
                    note = Some(e.to_string());
                    None
                }
            })
            .collect();
        if let Some(n) = &note {
            diagnostics.push(format!("{}: {n}", h.path));
        }
        let indicator = indicators.get(&h.path).copied();
        let verdict = scored_tree
            .get(&h.leaf)
            .and_then(|leaf| leaf.metrics.iter().find(|m| m.name == h.spec.name()))
            .and_then(|m| m.verdict);
        metrics.insert(
            h.path.clone(),
            MetricProvenance {
                leaf: h.leaf.clone(),
                metric: h.spec.name().to_string(),
                unit: h.spec.unit().to_string(),
                scale: h.spec.scale(),
                direction: h.spec.direction(),
                records_considered: h.records.len(),
                selected: h.records.last().map(|r| SelectedRecord {
                    line: r.line,
                    ts: r.record.ts,
                    value: r.record.value,
                    source: r.record.source.clone(),
                }),
                indicator,
                verdict,
                dispersion: dispersion(&history).ok(),
                note,
            },
        );
    }

    let mut verdict_summary: BTreeMap<String, usize> = VerdictLevel::ALL
        .iter()
        .map(|l| (l.as_str().to_string(), 0))
        .chain([("no-data".to_string(), 0), ("unassessed".to_string(), 0)])
        .collect();
    for m in metrics.values() {
        let key = match (m.indicator, m.verdict) {
            (None, _) => "no-data",
            (Some(_), None) => "unassessed",
            (Some(_), Some(v)) => v.level.as_str(),
        };
        *verdict_summary.get_mut(key).expect("summary key") += 1;
    }

    let predictions = if model.purpose().grants(Capability::Predict) {
        Some(predict_section(model, &histories, as_of, ruleset, operator, horizon)?)
    } else {
        None
    };

    let recommendations = recommend(&scored_tree, &metrics, predictions.as_ref(), as_of);
    Ok(Evaluation {
        as_of,
        operator,
        scored_tree,
        verdict_summary,
        metrics,
        predictions,
        recommendations,
        diagnostics,
    })
}

fn predict_section(
    model: &QualityModel,
    histories: &[MetricHistory<'_>],
    as_of: DateTime<Utc>,
    ruleset: &Ruleset,
    operator: AggregationOperator,
    horizon: Duration,
) -> Result<PredictionSection, ProcessError> {
    let instants: BTreeSet<DateTime<Utc>> = histories
        .iter()
        .flat_map(|h| h.records.iter().map(|r| r.record.ts))
        .filter(|t| *t <= as_of)
        .collect();
    let mut series = Vec::new();
    for t in instants {
        let tree = rollup_metrics(model, &indicators_at(histories, t), ruleset, operator)?;
        if let Some(score) = tree.root_score() {
            series.push(SeriesPoint { ts: t, score });
        }
    }
    let points: Vec<_> = series.iter().map(|p| (p.ts, p.score)).collect();
    let (trend, note) = match predict_trend(&points, horizon) {
        Ok(t) => (Some(t), None),
        Err(ProcessError::InsufficientHistory) => (None, Some("insufficient history for a trend".to_string())),
        Err(e) => return Err(e),
    };
    Ok(PredictionSection {
        horizon_seconds: horizon.num_seconds(),
        series,
        trend,
        note,
    })
}

fn recommend(
    tree: &ScoredTree,
    metrics: &BTreeMap<String, MetricProvenance>,
    predictions: Option<&PredictionSection>,
    as_of: DateTime<Utc>,
) -> Vec<String> {
    let mut out = Vec::new();
    if tree.root_score().is_none() {
        out.push(format!("no usable measurements as of {}", format_ts(&as_of)));
    }
    for leaf in tree.leaves() {
        for m in &leaf.metrics {
            let path = metric_path(&leaf.path, &m.name);
            match (m.indicator, m.verdict.map(|v| v.level)) {
                (None, _) => {
                    let why = metrics.get(&path).and_then(|p| p.note.as_deref());
                    match why {
                        Some(why) => out.push(format!("fix measurement of {path}: {why}")),
                        None => out.push(format!("collect data for {path}")),
                    }
                }
                (Some(_), Some(VerdictLevel::Rejected)) => out.push(format!("address {path} before gate")),
                (Some(_), Some(VerdictLevel::Marginal)) => out.push(format!("raise {path} to its acceptance level")),
                _ => {}
            }
        }
    }
    if let Some(trend) = predictions.and_then(|p| p.trend) {
        if trend.slope < 0.0 {
            out.push(format!(
                "root score trending down: forecast {} at {}",
                format_number(trend.forecast_score),
                format_ts(&trend.forecast_at)
            ));
        }
    }
    out
}

/// The output of one execution cycle, tied to the plan and model it came
/// from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_id: Option<String>,
    pub model_id: String,
    pub model_title: String,
    pub model_hash: String,
    #[serde(flatten)]
    pub evaluation: Evaluation,
}

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(|| "no data".to_string(), |v| format!("{v:.9}"))
}

/// Rounds to nine decimals so dashboards compare stably as text.
fn round9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn dashboard_node(node: &ScoredNode) -> Value {
    json!({
        "name": node.name,
        "score": node.score.map(round9),
        "verdict": node.verdict.map(|v| v.level.as_str()),
        "children": node.children.iter().map(dashboard_node).collect::<Vec<_>>(),
    })
}

impl EvaluationReport {
    /// Report for an evaluation that is not bound to a plan.
    pub fn adhoc(model: &QualityModel, evaluation: Evaluation) -> Self {
        EvaluationReport {
            plan_id: None,
            model_id: model.id().to_string(),
            model_title: model.title().to_string(),
            model_hash: content_hash(model),
            evaluation,
        }
    }

    pub fn root_score(&self) -> Option<f64> {
        self.evaluation.root_score()
    }

    pub fn dashboard(&self) -> Value {
        let mut v = json!({
            "model": self.model_id,
            "model_hash": self.model_hash,
            "as_of": format_ts(&self.evaluation.as_of),
            "operator": self.evaluation.operator,
            "root": dashboard_node(&self.evaluation.scored_tree.root),
        });
        if let Some(id) = &self.plan_id {
            v["plan_id"] = json!(id);
        }
        v
    }

    pub fn dashboard_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.dashboard()).expect("dashboard serializes");
        s.push('\n');
        s
    }

    pub fn detailed_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Analyst-facing markdown summary.
    pub fn summary_md(&self) -> String {
        let e = &self.evaluation;
        let mut s = String::new();
        let _ = writeln!(s, "# Quality gate summary: {}\n", self.model_title);
        if let Some(id) = &self.plan_id {
            let _ = writeln!(s, "- plan: `{id}`");
        }
        let _ = writeln!(s, "- model: `{}` (sha256 `{}`)", self.model_id, self.model_hash);
        let _ = writeln!(s, "- as of: {}", format_ts(&e.as_of));
        let _ = writeln!(s, "- operator: {}", e.operator);
        let _ = writeln!(s, "- root score: {}\n", fixed(e.root_score()));

        s.push_str("## Verdicts\n\n| verdict | metrics |\n|---|---|\n");
        for (k, n) in &e.verdict_summary {
            let _ = writeln!(s, "| {k} | {n} |");
        }

        s.push_str("\n## Characteristics\n\n| path | weight | score | verdict |\n|---|---|---|---|\n");
        e.scored_tree.root.walk(&mut |n| {
            let path = if n.path.is_empty() {
                n.name.as_str()
            } else {
                n.path.as_str()
            };
            let verdict = n.verdict.map_or("-", |v| v.level.as_str());
            let _ = writeln!(s, "| {path} | {:.9} | {} | {verdict} |", n.weight, fixed(n.score));
        });

        if let Some(p) = &e.predictions {
            s.push_str("\n## Predictions\n\n");
            match &p.trend {
                Some(t) => {
                    let _ = writeln!(
                        s,
                        "- forecast root score at {}: {:.9} (slope {:.9e}/s over {} points)",
                        format_ts(&t.forecast_at),
                        t.forecast_score,
                        t.slope,
                        t.n
                    );
                }
                None => {
                    let _ = writeln!(s, "- {}", p.note.as_deref().unwrap_or("no trend"));
                }
            }
        }

        s.push_str("\n## Recommendations\n\n");
        if e.recommendations.is_empty() {
            s.push_str("- none\n");
        }
        for r in &e.recommendations {
            let _ = writeln!(s, "- {r}");
        }
        s
    }
}

/// Runs one execution cycle of `plan` against the store contents.
pub fn execute_cycle(
    plan: &EvaluationPlan,
    model: &QualityModel,
    store: &RecordStore,
    as_of: DateTime<Utc>,
) -> Result<EvaluationReport, ProcessError> {
    let actual = content_hash(model);
    if actual != plan.model_ref.hash {
        return Err(ProcessError::ModelHashMismatch {
            expected: plan.model_ref.hash.clone(),
            actual,
        });
    }
    let (records, store_diagnostics) = store.snapshot(model)?;
    let mut evaluation = evaluate_records(
        model,
        &records,
        as_of,
        &plan.analysis.ruleset,
        plan.operator_for(model),
        plan.horizon(),
    )?;
    evaluation
        .diagnostics
        .extend(store_diagnostics.iter().map(|d| format!("store {d}")));
    Ok(EvaluationReport {
        plan_id: Some(plan.plan_id.clone()),
        model_id: model.id().to_string(),
        model_title: model.title().to_string(),
        model_hash: actual,
        evaluation,
    })
}
