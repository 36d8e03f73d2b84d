//! Derivation rule engine.
//!
//! Rules are identified by id and tuned through a flat parameter map, so a
//! ruleset can be adjusted from an override file without code changes. The
//! default set covers maximum tree height, sibling weight sums, leaf
//! simplicity, division arity, path uniqueness and threshold presence.
//!
//! R4 reads "division by equal characteristic" as a bound on the number of
//! children an internal node may be divided into.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Capability, Characteristic, QualityModel, WEIGHT_TOLERANCE};

/// Path used for violations that concern the model as a whole or its root.
pub const MODEL_MARKER: &str = "@model";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("unknown rule id `{0}`")]
    UnknownRuleId(String),
    #[error("rule id `{0}` appears twice in the ruleset")]
    DuplicateRuleId(String),
    #[error("rule `{rule}` has no parameter `{param}`")]
    UnknownParam { rule: String, param: String },
    #[error("rule `{rule}` parameter `{param}`: {reason}")]
    InvalidParam {
        rule: String,
        param: String,
        reason: String,
    },
    #[error("line {line}: {reason}")]
    Override { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub severity: Severity,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule_id: String,
    pub path: String,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}: {}", self.severity, self.rule_id, self.path, self.message)
    }
}

/// Parameter names and defaults of every rule this engine knows about.
fn known_params(id: &str) -> Option<&'static [(&'static str, f64)]> {
    Some(match id {
        "R1" => &[("max_height", 5.0)],
        "R2" => &[("tolerance", WEIGHT_TOLERANCE)],
        "R3" => &[],
        "R4" => &[("min", 2.0), ("max", 9.0)],
        "R5" => &[],
        "R6" => &[],
        _ => return None,
    })
}

fn rule(id: &str, severity: Severity) -> Rule {
    let params = known_params(id)
        .unwrap_or_default()
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    Rule {
        id: id.to_string(),
        severity,
        params,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ruleset {
    rules: Vec<Rule>,
}

impl Ruleset {
    pub fn new(rules: Vec<Rule>) -> Result<Self, RuleError> {
        let mut seen = HashSet::new();
        for r in &rules {
            if !seen.insert(r.id.as_str()) {
                return Err(RuleError::DuplicateRuleId(r.id.clone()));
            }
        }
        Ok(Ruleset { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Applies `RULE.param=value` lines. `RULE.severity` takes `error` or
    /// `warning`; blank lines and `#` comments are ignored.
    pub fn with_overrides(mut self, text: &str) -> Result<Self, RuleError> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| RuleError::Override { line: line_no, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (id, param) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| err(format!("expected RULE.param, got `{}`", key.trim())))?;
            let value = value.trim();
            let rule = self
                .rules
                .iter_mut()
                .find(|r| r.id == id)
                .ok_or_else(|| err(format!("unknown rule id `{id}`")))?;
            if param == "severity" {
                rule.severity = match value.to_ascii_lowercase().as_str() {
                    "error" => Severity::Error,
                    "warning" => Severity::Warning,
                    other => return Err(err(format!("severity must be error or warning, got `{other}`"))),
                };
                continue;
            }
            let slot = rule
                .params
                .get_mut(param)
                .ok_or_else(|| err(format!("rule `{id}` has no parameter `{param}`")))?;
            *slot = value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("`{value}` is not a number")))?;
        }
        Ok(self)
    }
}

pub fn default_ruleset() -> Ruleset {
    Ruleset {
        rules: vec![
            rule("R1", Severity::Error),
            rule("R2", Severity::Error),
            rule("R3", Severity::Error),
            rule("R4", Severity::Warning),
            rule("R5", Severity::Error),
            rule("R6", Severity::Warning),
        ],
    }
}

fn param(rule: &Rule, name: &str) -> Result<f64, RuleError> {
    rule.params.get(name).copied().ok_or_else(|| RuleError::UnknownParam {
        rule: rule.id.clone(),
        param: name.to_string(),
    })
}

fn count_param(rule: &Rule, name: &str) -> Result<usize, RuleError> {
    let v = param(rule, name)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(RuleError::InvalidParam {
            rule: rule.id.clone(),
            param: name.to_string(),
            reason: format!("expected a non-negative integer, got {v}"),
        });
    }
    Ok(v as usize)
}

fn display_path(path: &str) -> String {
    if path.is_empty() {
        MODEL_MARKER.to_string()
    } else {
        path.to_string()
    }
}

/// Numeric-aware ordering key so that `R10` sorts after `R9`.
fn rule_key(id: &str) -> (String, u64, String) {
    let digits_at = id.find(|c: char| c.is_ascii_digit()).unwrap_or(id.len());
    let (prefix, rest) = id.split_at(digits_at);
    let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let number = rest[..end].parse().unwrap_or(0);
    (prefix.to_string(), number, rest[end..].to_string())
}

/// Sorts violations by rule id (numeric-aware), then path, then message.
pub fn sort_violations(violations: &mut [RuleViolation]) {
    violations.sort_by(|a, b| {
        rule_key(&a.rule_id)
            .cmp(&rule_key(&b.rule_id))
            .then_with(|| a.path.cmp(&b.path))
            .then_with(|| a.message.cmp(&b.message))
    });
}

/// Runs every rule of the ruleset against the model.
pub fn check(model: &QualityModel, ruleset: &Ruleset) -> Result<Vec<RuleViolation>, RuleError> {
    let mut nodes: Vec<(String, &Characteristic)> = Vec::new();
    model.walk(|path, node| nodes.push((path.to_string(), node)));

    let mut out = Vec::new();
    for rule in &ruleset.rules {
        let mut emit = |path: &str, message: String| {
            out.push(RuleViolation {
                rule_id: rule.id.clone(),
                path: display_path(path),
                message,
                severity: rule.severity,
            })
        };
        match rule.id.as_str() {
            "R1" => {
                let max = count_param(rule, "max_height")?;
                let height = model.root().height();
                if height > max {
                    let deepest = nodes
                        .iter()
                        .filter(|(p, n)| n.is_leaf() && depth(p) == height)
                        .map(|(p, _)| p.as_str())
                        .min()
                        .unwrap_or("");
                    emit(deepest, format!("tree height {height} exceeds maximum {max}"));
                }
            }
            "R2" => {
                let tol = param(rule, "tolerance")?;
                let root_w = model.root().weight;
                if (root_w - 1.0).abs() > tol {
                    emit("", format!("root weight {root_w} differs from 1"));
                }
                for (path, node) in nodes.iter().filter(|(_, n)| !n.is_leaf()) {
                    let sum: f64 = node.children.iter().map(|c| c.weight).sum();
                    if (sum - 1.0).abs() > tol {
                        emit(path, format!("children weights sum to {sum}, expected 1"));
                    }
                }
            }
            "R3" => {
                if model.purpose().grants(Capability::Assess) {
                    for (path, node) in &nodes {
                        if node.is_leaf() && node.metrics.is_empty() {
                            emit(path, "leaf characteristic carries no metric".to_string());
                        }
                    }
                }
            }
            "R4" => {
                let min = count_param(rule, "min")?;
                let max = count_param(rule, "max")?;
                for (path, node) in nodes.iter().filter(|(_, n)| !n.is_leaf()) {
                    let k = node.children.len();
                    if k < min || k > max {
                        emit(
                            path,
                            format!("divided into {k} sub-characteristic(s), expected {min}..={max}"),
                        );
                    }
                }
            }
            "R5" => {
                let mut seen = BTreeSet::new();
                let mut reported = BTreeSet::new();
                for (path, _) in nodes.iter().skip(1) {
                    if !seen.insert(path.as_str()) && reported.insert(path.as_str()) {
                        emit(path, "characteristic path is not unique".to_string());
                    }
                }
            }
            "R6" => {
                if model.purpose().grants(Capability::Assess) {
                    for (path, node) in nodes.iter().filter(|(_, n)| n.is_leaf()) {
                        for m in node.metrics.iter().filter(|m| m.thresholds().is_none()) {
                            emit(path, format!("metric `{}` declares no thresholds", m.name()));
                        }
                    }
                }
            }
            other => return Err(RuleError::UnknownRuleId(other.to_string())),
        }
    }
    sort_violations(&mut out);
    Ok(out)
}

fn depth(path: &str) -> usize {
    if path.is_empty() {
        0
    } else {
        path.matches(crate::model::PATH_SEPARATOR).count() + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Direction, LinearNormalization, MetricSpec, Scale, ThresholdSet};
    use crate::model::{AssessmentMethod, InformationSource, ModelBuilder, Organization, Purpose};

    fn metric(thresholds: bool) -> MetricSpec {
        MetricSpec::new(
            "m",
            Scale::Ratio,
            "",
            Direction::HigherBetter,
            LinearNormalization {
                from_raw: 0.0,
                to_raw: 1.0,
            },
            thresholds.then(|| ThresholdSet::new(0.2, 0.4, 0.8, None).unwrap()),
        )
        .unwrap()
    }

    fn build(purpose: Purpose, root: Characteristic) -> QualityModel {
        ModelBuilder::new()
            .id("m")
            .context("")
            .purpose(purpose)
            .assessment_method(AssessmentMethod::Rigorous)
            .information_source(InformationSource::Expert)
            .organization(Organization::Hierarchical)
            .ruleset("default")
            .lineage(vec![])
            .root(root)
            .build()
            .unwrap()
    }

    fn leaf(name: &str) -> Characteristic {
        Characteristic::new(name, 1.0).with_metrics(vec![metric(true)])
    }

    fn chain(len: usize) -> Characteristic {
        let mut node = leaf(&format!("c{len}"));
        for i in (1..len).rev() {
            node = Characteristic::new(format!("c{i}"), 1.0).with_children(vec![node]);
        }
        Characteristic::new("root", 1.0).with_children(vec![node])
    }

    #[test]
    fn default_ruleset_shape() {
        let rs = default_ruleset();
        let ids: Vec<&str> = rs.rules().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["R1", "R2", "R3", "R4", "R5", "R6"]);
        assert_eq!(rs.get("R1").unwrap().severity, Severity::Error);
        assert_eq!(rs.get("R1").unwrap().params["max_height"], 5.0);
        assert_eq!(rs.get("R4").unwrap().severity, Severity::Warning);
        assert_eq!(ids.iter().collect::<HashSet<_>>().len(), ids.len());
    }

    #[test]
    fn conforming_model_is_clean() {
        let root = Characteristic::new("q", 1.0).with_children(vec![
            Characteristic::new("a", 1.0).with_children(vec![leaf("x"), leaf("y")]),
            Characteristic::new("b", 3.0).with_children(vec![leaf("x"), leaf("z")]),
        ]);
        let m = build(Purpose::Assessment, root);
        assert_eq!(check(&m, &default_ruleset()).unwrap(), vec![]);
    }

    #[test]
    fn height_seven_chain_violates_r1_once() {
        let m = build(Purpose::Assessment, chain(7));
        let v = check(&m, &default_ruleset()).unwrap();
        let r1: Vec<_> = v.iter().filter(|v| v.rule_id == "R1").collect();
        assert_eq!(r1.len(), 1);
        assert_eq!(r1[0].path, "c1/c2/c3/c4/c5/c6/c7");
        assert_eq!(r1[0].severity, Severity::Error);
    }

    #[test]
    fn r1_monotone_in_max_height() {
        let m = build(Purpose::Assessment, chain(4));
        let violates = |h: usize| {
            let rs = default_ruleset().with_overrides(&format!("R1.max_height={h}")).unwrap();
            check(&m, &rs).unwrap().iter().any(|v| v.rule_id == "R1")
        };
        let outcomes: Vec<bool> = (0..8).map(violates).collect();
        assert_eq!(outcomes, [true, true, true, true, false, false, false, false]);
        for h in 1..8 {
            if outcomes[h] {
                assert!(outcomes[h - 1]);
            }
        }
    }

    #[test]
    fn bare_leaf_in_assessment_model_violates_r3() {
        let root = Characteristic::new("q", 1.0).with_children(vec![leaf("a"), Characteristic::new("bare", 1.0)]);
        let m = build(Purpose::Assessment, root.clone());
        let v = check(&m, &default_ruleset()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].rule_id.as_str(), v[0].path.as_str()), ("R3", "bare"));
        let def = build(Purpose::Definition, root);
        assert!(check(&def, &default_ruleset()).unwrap().is_empty());
    }

    #[test]
    fn single_child_warns_r4() {
        let root = Characteristic::new("q", 1.0).with_children(vec![
            Characteristic::new("only", 1.0).with_children(vec![leaf("x")]),
            leaf("y"),
        ]);
        let m = build(Purpose::Assessment, root);
        let v = check(&m, &default_ruleset()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule_id, "R4");
        assert_eq!(v[0].path, "only");
        assert_eq!(v[0].severity, Severity::Warning);
    }

    #[test]
    fn missing_thresholds_warn_r6() {
        let root = Characteristic::new("q", 1.0).with_children(vec![
            leaf("a"),
            Characteristic::new("b", 1.0).with_metrics(vec![metric(false)]),
        ]);
        let v = check(&build(Purpose::Prediction, root), &default_ruleset()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].rule_id.as_str(), v[0].severity), ("R6", Severity::Warning));
    }

    #[test]
    fn r2_and_r5_catch_unchecked_trees() {
        let root = Characteristic::new("q", 1.0).with_children(vec![
            Characteristic::new("a", 0.5).with_metrics(vec![metric(true)]),
            Characteristic::new("a", 0.4).with_metrics(vec![metric(true)]),
        ]);
        let m = QualityModel::from_parts_unchecked(Purpose::Assessment, root);
        let ids: Vec<(String, String)> = check(&m, &default_ruleset())
            .unwrap()
            .into_iter()
            .map(|v| (v.rule_id, v.path))
            .collect();
        assert_eq!(
            ids,
            [
                ("R2".to_string(), "@model".to_string()),
                ("R5".to_string(), "a".to_string())
            ]
        );
    }

    #[test]
    fn unknown_rule_ids_rejected() {
        let mut rules = default_ruleset().rules().to_vec();
        rules.push(Rule {
            id: "R99".into(),
            severity: Severity::Error,
            params: BTreeMap::new(),
        });
        let rs = Ruleset::new(rules).unwrap();
        let m = build(Purpose::Definition, Characteristic::new("q", 1.0));
        assert_eq!(check(&m, &rs), Err(RuleError::UnknownRuleId("R99".into())));
        let dup = vec![rule("R1", Severity::Error), rule("R1", Severity::Warning)];
        assert!(matches!(Ruleset::new(dup), Err(RuleError::DuplicateRuleId(_))));
    }

    #[test]
    fn overrides() {
        let rs = default_ruleset()
            .with_overrides("# tighten\nR1.max_height=4\n\nR4.severity=error\n")
            .unwrap();
        assert_eq!(rs.get("R1").unwrap().params["max_height"], 4.0);
        assert_eq!(rs.get("R4").unwrap().severity, Severity::Error);
        for bad in [
            "R9.max_height=3",
            "R1.depth=3",
            "R1.max_height=abc",
            "R1max=3",
            "R4.severity=fatal",
        ] {
            assert!(matches!(
                default_ruleset().with_overrides(bad),
                Err(RuleError::Override { line: 1, .. })
            ));
        }
    }

    #[test]
    fn violations_sorted_numerically() {
        let mut v: Vec<RuleViolation> = ["R10", "R2", "R1"]
            .iter()
            .map(|id| RuleViolation {
                rule_id: id.to_string(),
                path: "x".into(),
                message: String::new(),
                severity: Severity::Error,
            })
            .collect();
        sort_violations(&mut v);
        let ids: Vec<&str> = v.iter().map(|v| v.rule_id.as_str()).collect();
        assert_eq!(ids, ["R1", "R2", "R10"]);
    }
}
