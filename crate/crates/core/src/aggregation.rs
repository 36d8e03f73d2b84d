//! Aggregation operators and the bottom-up roll-up of indicators.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{admissible_stats, evaluate_thresholds, Scale, Statistic, Verdict};
use crate::model::{metric_path, Characteristic, Organization, QualityModel, PATH_SEPARATOR};
use crate::rules::{self, RuleViolation, Ruleset, Severity, MODEL_MARKER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregationError {
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("{values} values but {weights} weights")]
    LengthMismatch { values: usize, weights: usize },
    #[error("weight {0} is not positive")]
    NonPositiveWeight(f64),
    #[error("indicator {0} lies outside [0, 1]")]
    IndicatorOutOfRange(f64),
    #[error("`{0}` is not a leaf of the model")]
    UnknownLeafPath(String),
    #[error("`{0}` is not a metric of the model")]
    UnknownMetricPath(String),
    #[error("model has {} blocking rule violation(s)", .0.len())]
    ModelRuleViolations(Vec<RuleViolation>),
    #[error("{0} models cannot be evaluated, only hierarchical ones")]
    UnsupportedOrganization(Organization),
    #[error(transparent)]
    Rules(#[from] rules::RuleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationOperator {
    #[default]
    WeightedArithmeticMean,
    WeightedGeometricMean,
    WeightedHarmonicMean,
    WeightedMedian,
    Min,
    Max,
}

impl AggregationOperator {
    pub const ALL: [AggregationOperator; 6] = [
        AggregationOperator::WeightedArithmeticMean,
        AggregationOperator::WeightedGeometricMean,
        AggregationOperator::WeightedHarmonicMean,
        AggregationOperator::WeightedMedian,
        AggregationOperator::Min,
        AggregationOperator::Max,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationOperator::WeightedArithmeticMean => "weighted-arithmetic-mean",
            AggregationOperator::WeightedGeometricMean => "weighted-geometric-mean",
            AggregationOperator::WeightedHarmonicMean => "weighted-harmonic-mean",
            AggregationOperator::WeightedMedian => "weighted-median",
            AggregationOperator::Min => "min",
            AggregationOperator::Max => "max",
        }
    }

    /// The statistic whose admissibility the operator relies on.
    pub fn required_statistic(self) -> Statistic {
        match self {
            AggregationOperator::WeightedArithmeticMean => Statistic::ArithmeticMean,
            AggregationOperator::WeightedGeometricMean => Statistic::GeometricMean,
            AggregationOperator::WeightedHarmonicMean => Statistic::HarmonicMean,
            AggregationOperator::WeightedMedian => Statistic::Median,
            AggregationOperator::Min | AggregationOperator::Max => Statistic::Percentile,
        }
    }
}

impl fmt::Display for AggregationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationOperator {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AggregationOperator::ALL.into_iter().find(|v| v.as_str() == s).ok_or(())
    }
}

/// Combines indicators with positive weights. Weights are renormalized to sum
/// to one; the result always lies within `[min(values), max(values)]`.
pub fn aggregate(values: &[f64], weights: &[f64], operator: AggregationOperator) -> Result<f64, AggregationError> {
    if values.is_empty() {
        return Err(AggregationError::EmptyInput);
    }
    if values.len() != weights.len() {
        return Err(AggregationError::LengthMismatch {
            values: values.len(),
            weights: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(AggregationError::NonPositiveWeight(w));
    }
    if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(AggregationError::IndicatorOutOfRange(v));
    }

    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let raw = match operator {
        AggregationOperator::WeightedArithmeticMean => values.iter().zip(&weights).map(|(v, w)| v * w).sum(),
        AggregationOperator::WeightedGeometricMean => {
            if lo == 0.0 {
                0.0
            } else {
                values.iter().zip(&weights).map(|(v, w)| w * v.ln()).sum::<f64>().exp()
            }
        }
        AggregationOperator::WeightedHarmonicMean => {
            if lo == 0.0 {
                0.0
            } else {
                1.0 / values.iter().zip(&weights).map(|(v, w)| w / v).sum::<f64>()
            }
        }
        AggregationOperator::WeightedMedian => weighted_median(values, &weights),
        AggregationOperator::Min => lo,
        AggregationOperator::Max => hi,
    };
    // rounding in exp/ln or the reciprocal can land an ulp outside the range
    Ok(raw.clamp(lo, hi))
}

/// Smallest value whose cumulative (normalized) weight reaches one half.
fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cumulative = 0.0;
    for &i in &order {
        cumulative += weights[i];
        if cumulative >= 0.5 - 1e-12 {
            return values[i];
        }
    }
    values[order[order.len() - 1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub variance: f64,
    pub stddev: f64,
    pub n: usize,
}

/// Population variance (divides by `n`).
pub fn dispersion(values: &[f64]) -> Result<Dispersion, AggregationError> {
    if values.is_empty() {
        return Err(AggregationError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Dispersion {
        variance,
        stddev: variance.sqrt(),
        n: values.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredMetric {
    pub name: String,
    /// `None` when the metric has no data.
    pub indicator: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

/// A node of the scored tree; `score == None` marks NoData.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredNode {
    pub name: String,
    pub path: String,
    pub weight: f64,
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    /// Leaves with data in this subtree.
    pub contributing_count: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<ScoredMetric>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ScoredNode>,
}

impl ScoredNode {
    pub fn is_no_data(&self) -> bool {
        self.score.is_none()
    }

    /// Visits every node, parents before children.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a ScoredNode)) {
        visit(self);
        for child in &self.children {
            child.walk(visit);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredTree {
    pub operator: AggregationOperator,
    pub root: ScoredNode,
}

impl ScoredTree {
    pub fn root_score(&self) -> Option<f64> {
        self.root.score
    }

    pub fn get(&self, path: &str) -> Option<&ScoredNode> {
        if path.is_empty() {
            return Some(&self.root);
        }
        let mut node = &self.root;
        for part in path.split(PATH_SEPARATOR) {
            node = node.children.iter().find(|c| c.name == part)?;
        }
        Some(node)
    }

    pub fn leaves(&self) -> Vec<&ScoredNode> {
        let mut out = Vec::new();
        self.root.walk(&mut |n| {
            if n.children.is_empty() {
                out.push(n);
            }
        });
        out
    }
}

/// Per-leaf scoring result fed into the tree roll-up.
struct LeafScore {
    score: Option<f64>,
    verdict: Option<Verdict>,
    metrics: Vec<ScoredMetric>,
}

fn score_tree(
    model: &QualityModel,
    operator: AggregationOperator,
    leaf: &mut dyn FnMut(&str, &Characteristic) -> Result<LeafScore, AggregationError>,
) -> Result<ScoredTree, AggregationError> {
    fn go(
        node: &Characteristic,
        path: String,
        operator: AggregationOperator,
        leaf: &mut dyn FnMut(&str, &Characteristic) -> Result<LeafScore, AggregationError>,
    ) -> Result<ScoredNode, AggregationError> {
        if node.is_leaf() {
            let scored = leaf(&path, node)?;
            return Ok(ScoredNode {
                name: node.name.clone(),
                weight: node.weight,
                contributing_count: usize::from(scored.score.is_some()),
                score: scored.score,
                verdict: scored.verdict,
                metrics: scored.metrics,
                children: Vec::new(),
                path,
            });
        }
        let children = node
            .children
            .iter()
            .map(|c| {
                let child_path = if path.is_empty() {
                    c.name.clone()
                } else {
                    format!("{path}{PATH_SEPARATOR}{}", c.name)
                };
                go(c, child_path, operator, leaf)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (values, weights): (Vec<f64>, Vec<f64>) =
            children.iter().filter_map(|c| c.score.map(|s| (s, c.weight))).unzip();
        let score = if values.is_empty() {
            None
        } else {
            Some(aggregate(&values, &weights, operator)?)
        };
        Ok(ScoredNode {
            name: node.name.clone(),
            path,
            weight: node.weight,
            score,
            verdict: None,
            contributing_count: children.iter().map(|c| c.contributing_count).sum(),
            metrics: Vec::new(),
            children,
        })
    }
    let root = go(model.root(), String::new(), operator, leaf)?;
    Ok(ScoredTree { operator, root })
}

fn gate(model: &QualityModel, ruleset: &Ruleset) -> Result<(), AggregationError> {
    if model.organization() != Organization::Hierarchical {
        return Err(AggregationError::UnsupportedOrganization(model.organization()));
    }
    let errors: Vec<RuleViolation> = rules::check(model, ruleset)?
        .into_iter()
        .filter(|v| v.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(AggregationError::ModelRuleViolations(errors));
    }
    Ok(())
}

fn check_indicator(v: f64) -> Result<f64, AggregationError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(AggregationError::IndicatorOutOfRange(v))
    }
}

/// Rolls leaf indicators up the tree using the model's operator and the
/// default ruleset as the admission gate.
pub fn rollup(model: &QualityModel, leaf_indicators: &BTreeMap<String, f64>) -> Result<ScoredTree, AggregationError> {
    rollup_with(model, leaf_indicators, &rules::default_ruleset(), model.aggregation())
}

/// Leaf-level roll-up. A leaf verdict is attached when the leaf carries a
/// single metric and that metric declares thresholds.
pub fn rollup_with(
    model: &QualityModel,
    leaf_indicators: &BTreeMap<String, f64>,
    ruleset: &Ruleset,
    operator: AggregationOperator,
) -> Result<ScoredTree, AggregationError> {
    gate(model, ruleset)?;
    for key in leaf_indicators.keys() {
        if !model.find(key).is_some_and(Characteristic::is_leaf) {
            return Err(AggregationError::UnknownLeafPath(key.clone()));
        }
    }
    score_tree(model, operator, &mut |path, node| {
        let score = leaf_indicators.get(path).copied().map(check_indicator).transpose()?;
        let verdict = match (score, node.metrics.as_slice()) {
            (Some(s), [only]) => only.thresholds().map(|t| evaluate_thresholds(t, s)),
            _ => None,
        };
        Ok(LeafScore {
            score,
            verdict,
            metrics: Vec::new(),
        })
    })
}

/// Metric-level roll-up keyed by `leaf-path/metric-name`. Each metric gets its
/// own verdict; a leaf scores the equally weighted aggregate of its metrics
/// with data and carries the worst of its metric verdicts.
pub fn rollup_metrics(
    model: &QualityModel,
    metric_indicators: &BTreeMap<String, f64>,
    ruleset: &Ruleset,
    operator: AggregationOperator,
) -> Result<ScoredTree, AggregationError> {
    gate(model, ruleset)?;
    for key in metric_indicators.keys() {
        if model.resolve_metric(key).is_none() {
            return Err(AggregationError::UnknownMetricPath(key.clone()));
        }
    }
    score_tree(model, operator, &mut |path, node| {
        let mut metrics = Vec::with_capacity(node.metrics.len());
        let mut present = Vec::new();
        for spec in &node.metrics {
            let indicator = metric_indicators
                .get(&metric_path(path, spec.name()))
                .copied()
                .map(check_indicator)
                .transpose()?;
            let verdict = indicator.and_then(|i| spec.thresholds().map(|t| evaluate_thresholds(t, i)));
            if let Some(i) = indicator {
                present.push(i);
            }
            metrics.push(ScoredMetric {
                name: spec.name().to_string(),
                indicator,
                verdict,
            });
        }
        let score = if present.is_empty() {
            None
        } else {
            Some(aggregate(&present, &vec![1.0; present.len()], operator)?)
        };
        let verdict = metrics.iter().filter_map(|m| m.verdict).min();
        Ok(LeafScore {
            score,
            verdict,
            metrics,
        })
    })
}

/// Warns wherever the operator needs a statistic that the weakest metric
/// scale below a node does not admit. Reported at the shallowest offending
/// node only.
pub fn scale_admissibility(model: &QualityModel, operator: AggregationOperator) -> Vec<RuleViolation> {
    fn weakest(node: &Characteristic) -> Option<Scale> {
        let own = node.metrics.iter().map(|m| m.scale()).min();
        let below = node.children.iter().filter_map(weakest).min();
        match (own, below) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
    fn go(node: &Characteristic, path: &str, operator: AggregationOperator, out: &mut Vec<RuleViolation>) {
        let combines = node.children.len() + node.metrics.len() > 0;
        if let Some(scale) = weakest(node) {
            if combines && !admissible_stats(scale).contains(&operator.required_statistic()) {
                out.push(RuleViolation {
                    rule_id: SCALE_RULE_ID.to_string(),
                    path: if path.is_empty() {
                        MODEL_MARKER.to_string()
                    } else {
                        path.to_string()
                    },
                    message: format!("{operator} is not admissible on {scale}-scale metrics below this node"),
                    severity: Severity::Warning,
                });
                return;
            }
        }
        for child in &node.children {
            let p = if path.is_empty() {
                child.name.clone()
            } else {
                format!("{path}{PATH_SEPARATOR}{}", child.name)
            };
            go(child, &p, operator, out);
        }
    }
    let mut out = Vec::new();
    go(model.root(), "", operator, &mut out);
    out
}

pub const SCALE_RULE_ID: &str = "SCALE";
