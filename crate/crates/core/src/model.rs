//! Quality model domain types and structural queries on the characteristic tree.
//!
//! A [`QualityModel`] carries the eight conception attributes in the order a
//! designer fills them in: evaluation context, purpose, the two QEM
//! attributes, data organization, derivation ruleset, weight factors (held by
//! the tree itself) and lineage.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::AggregationOperator;
use crate::metrics::MetricSpec;

/// Tolerance on sibling weight sums after normalization.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

pub const PATH_SEPARATOR: char = '/';

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate sibling name `{name}` under `{parent}`")]
    DuplicateSiblingName { parent: String, name: String },
    #[error("model has no characteristic tree")]
    EmptyTree,
    #[error("characteristic `{path}` has non-positive weight {weight}")]
    NonPositiveWeight { path: String, weight: f64 },
    #[error("missing model attribute `{0}`")]
    MissingAttribute(&'static str),
    #[error("invalid name `{0}`: expected [A-Za-z0-9_-]+")]
    InvalidName(String),
    #[error("characteristic `{0}` declares both sub-characteristics and metrics")]
    MixedNode(String),
    #[error("duplicate metric `{name}` on `{path}`")]
    DuplicateMetricName { path: String, name: String },
}

/// What a model is able to do, derived from its purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capability {
    Describe,
    Assess,
    Predict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    Definition,
    Assessment,
    Prediction,
    MultiPurpose,
}

impl Purpose {
    pub const ALL: [Purpose; 4] = [
        Purpose::Definition,
        Purpose::Assessment,
        Purpose::Prediction,
        Purpose::MultiPurpose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Definition => "definition",
            Purpose::Assessment => "assessment",
            Purpose::Prediction => "prediction",
            Purpose::MultiPurpose => "multi-purpose",
        }
    }

    pub fn grants(self, capability: Capability) -> bool {
        purpose_capabilities(self).contains(&capability)
    }
}

/// Capabilities nest: each purpose level extends the previous one.
pub fn purpose_capabilities(purpose: Purpose) -> BTreeSet<Capability> {
    use Capability::*;
    match purpose {
        Purpose::Definition => BTreeSet::from([Describe]),
        Purpose::Assessment => BTreeSet::from([Describe, Assess]),
        Purpose::Prediction | Purpose::MultiPurpose => BTreeSet::from([Describe, Assess, Predict]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssessmentMethod {
    Rigorous,
    ShortCut,
    Approximate,
}

impl AssessmentMethod {
    pub const ALL: [AssessmentMethod; 3] = [
        AssessmentMethod::Rigorous,
        AssessmentMethod::ShortCut,
        AssessmentMethod::Approximate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssessmentMethod::Rigorous => "rigorous",
            AssessmentMethod::ShortCut => "short-cut",
            AssessmentMethod::Approximate => "approximate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InformationSource {
    Expert,
    NonExpert,
    Hybrid,
}

impl InformationSource {
    pub const ALL: [InformationSource; 3] = [
        InformationSource::Expert,
        InformationSource::NonExpert,
        InformationSource::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InformationSource::Expert => "expert",
            InformationSource::NonExpert => "non-expert",
            InformationSource::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QemAttributes {
    pub assessment_method: AssessmentMethod,
    pub information_source: InformationSource,
}

/// Data organization type. Only hierarchical models can be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Organization {
    Hierarchical,
    MetaModel,
    StatisticalImplicit,
}

impl Organization {
    pub const ALL: [Organization; 3] = [
        Organization::Hierarchical,
        Organization::MetaModel,
        Organization::StatisticalImplicit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Organization::Hierarchical => "hierarchical",
            Organization::MetaModel => "meta-model",
            Organization::StatisticalImplicit => "statistical-implicit",
        }
    }
}

macro_rules! keyword_enum {
    ($($ty:ty),*) => {$(
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <$ty>::ALL.into_iter().find(|v| v.as_str() == s).ok_or(())
            }
        }
    )*};
}

keyword_enum!(Purpose, AssessmentMethod, InformationSource, Organization);

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// A node of the characteristic tree. Used both as the raw tree description
/// handed to [`ModelBuilder`] and as the normalized node inside a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristic {
    pub name: String,
    pub weight: f64,
    pub children: Vec<Characteristic>,
    pub metrics: Vec<MetricSpec>,
}

impl Characteristic {
    pub fn new(name: impl Into<String>, weight: f64) -> Self {
        Characteristic {
            name: name.into(),
            weight,
            children: Vec::new(),
            metrics: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<Characteristic>) -> Self {
        self.children = children;
        self
    }

    pub fn with_metrics(mut self, metrics: Vec<MetricSpec>) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(Characteristic::node_count).sum::<usize>()
    }

    pub fn height(&self) -> usize {
        self.children.iter().map(|c| c.height() + 1).max().unwrap_or(0)
    }
}

fn join_path(parent: &str, name: &str) -> String {
    if parent.is_empty() {
        name.to_string()
    } else {
        format!("{parent}{PATH_SEPARATOR}{name}")
    }
}

/// Divides every sibling group by its sum. The root forms a group of one and
/// therefore always ends at weight 1.
pub fn normalize_weights(tree: Characteristic) -> Result<Characteristic, ModelError> {
    check_weights(&tree, "")?;
    let mut tree = tree;
    tree.weight = 1.0;
    normalize_children(&mut tree);
    Ok(tree)
}

fn check_weights(node: &Characteristic, path: &str) -> Result<(), ModelError> {
    if !(node.weight > 0.0 && node.weight.is_finite()) {
        return Err(ModelError::NonPositiveWeight {
            path: if path.is_empty() {
                node.name.clone()
            } else {
                path.to_string()
            },
            weight: node.weight,
        });
    }
    for child in &node.children {
        check_weights(child, &join_path(path, &child.name))?;
    }
    Ok(())
}

fn normalize_children(node: &mut Characteristic) {
    let sum: f64 = node.children.iter().map(|c| c.weight).sum();
    for child in &mut node.children {
        child.weight /= sum;
        normalize_children(child);
    }
}

/// Attribute values collected before the model is assembled. Every field is
/// optional here so that a missing attribute can be reported by name.
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    id: Option<String>,
    title: Option<String>,
    context: Option<String>,
    purpose: Option<Purpose>,
    assessment_method: Option<AssessmentMethod>,
    information_source: Option<InformationSource>,
    organization: Option<Organization>,
    ruleset_ref: Option<String>,
    lineage: Option<Vec<String>>,
    aggregation: Option<AggregationOperator>,
    root: Option<Characteristic>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn context(mut self, context: impl Into<String>) -> Self {
        self.context = Some(context.into());
        self
    }

    pub fn purpose(mut self, purpose: Purpose) -> Self {
        self.purpose = Some(purpose);
        self
    }

    pub fn assessment_method(mut self, method: AssessmentMethod) -> Self {
        self.assessment_method = Some(method);
        self
    }

    pub fn information_source(mut self, source: InformationSource) -> Self {
        self.information_source = Some(source);
        self
    }

    pub fn organization(mut self, organization: Organization) -> Self {
        self.organization = Some(organization);
        self
    }

    pub fn ruleset(mut self, ruleset_ref: impl Into<String>) -> Self {
        self.ruleset_ref = Some(ruleset_ref.into());
        self
    }

    pub fn lineage(mut self, lineage: Vec<String>) -> Self {
        self.lineage = Some(lineage);
        self
    }

    pub fn aggregation(mut self, operator: AggregationOperator) -> Self {
        self.aggregation = Some(operator);
        self
    }

    pub fn root(mut self, root: Characteristic) -> Self {
        self.root = Some(root);
        self
    }

    pub fn build(self) -> Result<QualityModel, ModelError> {
        let id = self.id.ok_or(ModelError::MissingAttribute("id"))?;
        if !is_valid_name(&id) {
            return Err(ModelError::InvalidName(id));
        }
        let context = self.context.ok_or(ModelError::MissingAttribute("context"))?;
        let purpose = self.purpose.ok_or(ModelError::MissingAttribute("purpose"))?;
        let assessment_method = self
            .assessment_method
            .ok_or(ModelError::MissingAttribute("qem_method"))?;
        let information_source = self
            .information_source
            .ok_or(ModelError::MissingAttribute("qem_source"))?;
        let organization = self.organization.ok_or(ModelError::MissingAttribute("organization"))?;
        let ruleset_ref = self.ruleset_ref.ok_or(ModelError::MissingAttribute("ruleset"))?;
        if !is_valid_name(&ruleset_ref) {
            return Err(ModelError::InvalidName(ruleset_ref));
        }
        let lineage = self.lineage.ok_or(ModelError::MissingAttribute("derives_from"))?;
        if let Some(bad) = lineage.iter().find(|l| !is_valid_name(l)) {
            return Err(ModelError::InvalidName(bad.clone()));
        }
        let root = self.root.ok_or(ModelError::EmptyTree)?;
        check_structure(&root, "")?;
        let root = normalize_weights(root)?;
        Ok(QualityModel {
            title: self.title.unwrap_or_else(|| id.clone()),
            id,
            context,
            purpose,
            qem: QemAttributes {
                assessment_method,
                information_source,
            },
            organization,
            ruleset_ref,
            root,
            aggregation: self.aggregation.unwrap_or_default(),
            lineage,
        })
    }
}

fn check_structure(node: &Characteristic, path: &str) -> Result<(), ModelError> {
    if !is_valid_name(&node.name) {
        return Err(ModelError::InvalidName(node.name.clone()));
    }
    let here = if path.is_empty() { node.name.as_str() } else { path };
    if !node.children.is_empty() && !node.metrics.is_empty() {
        return Err(ModelError::MixedNode(here.to_string()));
    }
    let mut seen = HashSet::new();
    for metric in &node.metrics {
        if !is_valid_name(metric.name()) {
            return Err(ModelError::InvalidName(metric.name().to_string()));
        }
        if !seen.insert(metric.name()) {
            return Err(ModelError::DuplicateMetricName {
                path: here.to_string(),
                name: metric.name().to_string(),
            });
        }
    }
    let mut seen = HashSet::new();
    for child in &node.children {
        if !seen.insert(child.name.as_str()) {
            return Err(ModelError::DuplicateSiblingName {
                parent: here.to_string(),
                name: child.name.clone(),
            });
        }
        check_structure(child, &join_path(path, &child.name))?;
    }
    Ok(())
}

/// Convenience wrapper over [`ModelBuilder`].
pub fn build_model(attributes: ModelBuilder, tree: Characteristic) -> Result<QualityModel, ModelError> {
    attributes.root(tree).build()
}

/// An immutable, validated quality model.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityModel {
    id: String,
    title: String,
    context: String,
    purpose: Purpose,
    qem: QemAttributes,
    organization: Organization,
    ruleset_ref: String,
    root: Characteristic,
    aggregation: AggregationOperator,
    lineage: Vec<String>,
}

/// A leaf characteristic together with its slash-joined path.
#[derive(Debug, Clone, Copy)]
pub struct LeafRef<'a> {
    pub path: &'a str,
    pub node: &'a Characteristic,
}

impl QualityModel {
    /// Assembles a model without running any structural check. Used to feed
    /// deliberately broken trees to the rule engine.
    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(purpose: Purpose, root: Characteristic) -> Self {
        QualityModel {
            id: "unchecked".into(),
            title: "unchecked".into(),
            context: String::new(),
            purpose,
            qem: QemAttributes {
                assessment_method: AssessmentMethod::Approximate,
                information_source: InformationSource::Expert,
            },
            organization: Organization::Hierarchical,
            ruleset_ref: "default".into(),
            root,
            aggregation: AggregationOperator::default(),
            lineage: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    pub fn qem(&self) -> QemAttributes {
        self.qem
    }

    pub fn organization(&self) -> Organization {
        self.organization
    }

    pub fn ruleset_ref(&self) -> &str {
        &self.ruleset_ref
    }

    pub fn root(&self) -> &Characteristic {
        &self.root
    }

    pub fn aggregation(&self) -> AggregationOperator {
        self.aggregation
    }

    pub fn lineage(&self) -> &[String] {
        &self.lineage
    }

    /// Same model with a different roll-up operator.
    pub fn with_aggregation(&self, aggregation: AggregationOperator) -> QualityModel {
        QualityModel {
            aggregation,
            ..self.clone()
        }
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Visits every node with its path, parents before children. The root
    /// has the empty path.
    pub fn walk<'a>(&'a self, mut visit: impl FnMut(&str, &'a Characteristic)) {
        fn go<'a>(node: &'a Characteristic, path: &str, visit: &mut impl FnMut(&str, &'a Characteristic)) {
            visit(path, node);
            for child in &node.children {
                go(child, &join_path(path, &child.name), visit);
            }
        }
        go(&self.root, "", &mut visit);
    }

    /// Leaves in tree order. A single-root model has one leaf with path "".
    pub fn leaves(&self) -> Vec<(String, &Characteristic)> {
        let mut out = Vec::new();
        self.walk(|path, node| {
            if node.is_leaf() {
                out.push((path.to_string(), node));
            }
        });
        out
    }

    pub fn find(&self, path: &str) -> Option<&Characteristic> {
        if path.is_empty() {
            return Some(&self.root);
        }
        let mut node = &self.root;
        for part in path.split(PATH_SEPARATOR) {
            node = node.children.iter().find(|c| c.name == part)?;
        }
        Some(node)
    }

    /// Resolves `leaf-path/metric-name` to the leaf path and the metric.
    /// For a single-root model the metric path is just the metric name.
    pub fn resolve_metric(&self, metric_path: &str) -> Option<(String, &MetricSpec)> {
        let (leaf_path, metric) = match metric_path.rsplit_once(PATH_SEPARATOR) {
            Some((leaf, metric)) => (leaf, metric),
            None => ("", metric_path),
        };
        let node = self.find(leaf_path)?;
        if !node.is_leaf() {
            return None;
        }
        let spec = node.metrics.iter().find(|m| m.name() == metric)?;
        Some((leaf_path.to_string(), spec))
    }

    /// Product of weights from the root down to `path`.
    pub fn path_weight(&self, path: &str) -> Option<f64> {
        let mut node = &self.root;
        let mut w = node.weight;
        if path.is_empty() {
            return Some(w);
        }
        for part in path.split(PATH_SEPARATOR) {
            node = node.children.iter().find(|c| c.name == part)?;
            w *= node.weight;
        }
        Some(w)
    }
}

pub fn metric_path(leaf_path: &str, metric: &str) -> String {
    join_path(leaf_path, metric)
}

/// Slash-joined paths of every node except the root.
pub fn model_paths(model: &QualityModel) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    model.walk(|path, _| {
        if !path.is_empty() {
            out.insert(path.to_string());
        }
    });
    out
}

/// Edges on the longest root-to-leaf path.
pub fn tree_height(model: &QualityModel) -> usize {
    model.root.height()
}

/// Attribute-by-attribute comparison with weights compared within `tol`.
/// Metric specs and thresholds are compared within `tol` as well.
pub fn structurally_equal(a: &QualityModel, b: &QualityModel, tol: f64) -> bool {
    a.id == b.id
        && a.title == b.title
        && a.context == b.context
        && a.purpose == b.purpose
        && a.qem == b.qem
        && a.organization == b.organization
        && a.ruleset_ref == b.ruleset_ref
        && a.aggregation == b.aggregation
        && a.lineage == b.lineage
        && nodes_equal(&a.root, &b.root, tol)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn metrics_equal(a: &MetricSpec, b: &MetricSpec, tol: f64) -> bool {
    let (na, nb) = (a.normalization(), b.normalization());
    let thresholds = match (a.thresholds(), b.thresholds()) {
        (None, None) => true,
        (Some(x), Some(y)) => {
            close(x.reject(), y.reject(), tol)
                && close(x.accept(), y.accept(), tol)
                && close(x.target(), y.target(), tol)
                && match (x.reference(), y.reference()) {
                    (None, None) => true,
                    (Some(p), Some(q)) => close(p, q, tol),
                    _ => false,
                }
        }
        _ => false,
    };
    a.name() == b.name()
        && a.scale() == b.scale()
        && a.unit() == b.unit()
        && a.direction() == b.direction()
        && close(na.from_raw, nb.from_raw, tol)
        && close(na.to_raw, nb.to_raw, tol)
        && thresholds
}

fn nodes_equal(a: &Characteristic, b: &Characteristic, tol: f64) -> bool {
    a.name == b.name
        && close(a.weight, b.weight, tol)
        && a.children.len() == b.children.len()
        && a.metrics.len() == b.metrics.len()
        && a.children.iter().zip(&b.children).all(|(x, y)| nodes_equal(x, y, tol))
        && a.metrics.iter().zip(&b.metrics).all(|(x, y)| metrics_equal(x, y, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs() -> ModelBuilder {
        ModelBuilder::new()
            .id("m")
            .context("")
            .purpose(Purpose::Definition)
            .assessment_method(AssessmentMethod::Approximate)
            .information_source(InformationSource::Expert)
            .organization(Organization::Hierarchical)
            .ruleset("default")
            .lineage(vec![])
    }

    fn node(name: &str, w: f64, children: Vec<Characteristic>) -> Characteristic {
        Characteristic::new(name, w).with_children(children)
    }

    #[test]
    fn minimal_model_has_height_zero() {
        let m = build_model(attrs(), Characteristic::new("quality", 1.0)).unwrap();
        assert_eq!(tree_height(&m), 0);
        assert!(model_paths(&m).is_empty());
        assert_eq!(m.root().weight, 1.0);
    }

    #[test]
    fn build_normalizes_weights() {
        let tree = node("q", 3.0, vec![node("a", 2.0, vec![]), node("b", 2.0, vec![])]);
        let m = build_model(attrs(), tree).unwrap();
        assert_eq!(m.root().weight, 1.0);
        let w: Vec<f64> = m.root().children.iter().map(|c| c.weight).collect();
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn duplicate_siblings_rejected() {
        let tree = node(
            "q",
            1.0,
            vec![node("reliability", 1.0, vec![]), node("reliability", 1.0, vec![])],
        );
        assert!(matches!(
            build_model(attrs(), tree),
            Err(ModelError::DuplicateSiblingName { name, .. }) if name == "reliability"
        ));
    }

    #[test]
    fn missing_attributes_reported_by_name() {
        let b = ModelBuilder::new()
            .id("m")
            .context("")
            .root(Characteristic::new("q", 1.0));
        assert_eq!(b.build(), Err(ModelError::MissingAttribute("purpose")));
        let b = attrs();
        assert_eq!(b.build(), Err(ModelError::EmptyTree));
        let no_lineage = ModelBuilder::new()
            .id("m")
            .context("")
            .purpose(Purpose::Definition)
            .assessment_method(AssessmentMethod::Approximate)
            .information_source(InformationSource::Expert)
            .organization(Organization::Hierarchical)
            .ruleset("default")
            .root(Characteristic::new("q", 1.0));
        assert_eq!(no_lineage.build(), Err(ModelError::MissingAttribute("derives_from")));
    }

    #[test]
    fn invalid_names_rejected() {
        let tree = node("q", 1.0, vec![node("has space", 1.0, vec![])]);
        assert!(matches!(build_model(attrs(), tree), Err(ModelError::InvalidName(_))));
        let tree = node("q", 1.0, vec![node("a/b", 1.0, vec![])]);
        assert!(matches!(build_model(attrs(), tree), Err(ModelError::InvalidName(_))));
    }

    #[test]
    fn normalize_examples() {
        let t = normalize_weights(node("q", 1.0, vec![node("a", 0.7, vec![]), node("b", 0.3, vec![])])).unwrap();
        assert!((t.children[0].weight - 0.7).abs() < 1e-15);
        assert!((t.children[1].weight - 0.3).abs() < 1e-15);
        let t = normalize_weights(node(
            "q",
            1.0,
            vec![node("a", 1.0, vec![]), node("b", 1.0, vec![]), node("c", 2.0, vec![])],
        ))
        .unwrap();
        let w: Vec<f64> = t.children.iter().map(|c| c.weight).collect();
        assert_eq!(w, vec![0.25, 0.25, 0.5]);
        let err = normalize_weights(node("q", 1.0, vec![node("a", 0.0, vec![])])).unwrap_err();
        assert!(matches!(err, ModelError::NonPositiveWeight { path, .. } if path == "a"));
    }

    #[test]
    fn paths_and_height() {
        let tree = node(
            "q",
            1.0,
            vec![node("a", 1.0, vec![node("b", 1.0, vec![])]), node("c", 1.0, vec![])],
        );
        let m = build_model(attrs(), tree.clone()).unwrap();
        let expected: BTreeSet<String> = ["a", "a/b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(model_paths(&m), expected);
        assert_eq!(tree_height(&m), 2);
        assert_eq!(model_paths(&m).len(), m.node_count() - 1);
        let again = build_model(attrs(), tree).unwrap();
        assert_eq!(model_paths(&m), model_paths(&again));

        let chain = node("q", 1.0, vec![node("a", 1.0, vec![node("b", 1.0, vec![])])]);
        assert_eq!(tree_height(&build_model(attrs(), chain).unwrap()), 2);
    }

    #[test]
    fn capability_nesting() {
        use Capability::*;
        assert_eq!(purpose_capabilities(Purpose::Definition), BTreeSet::from([Describe]));
        assert_eq!(
            purpose_capabilities(Purpose::Assessment),
            BTreeSet::from([Describe, Assess])
        );
        assert!(purpose_capabilities(Purpose::Assessment).is_subset(&purpose_capabilities(Purpose::Prediction)));
        assert!(purpose_capabilities(Purpose::Definition).is_subset(&purpose_capabilities(Purpose::Assessment)));
        assert_eq!(
            purpose_capabilities(Purpose::MultiPurpose),
            purpose_capabilities(Purpose::Prediction)
        );
    }

    #[test]
    fn find_and_resolve() {
        let tree = node(
            "q",
            1.0,
            vec![node("a", 1.0, vec![node("b", 3.0, vec![]), node("c", 1.0, vec![])])],
        );
        let m = build_model(attrs(), tree).unwrap();
        assert_eq!(m.find("a/b").unwrap().name, "b");
        assert!(m.find("a/x").is_none());
        assert!((m.path_weight("a/b").unwrap() - 0.75).abs() < 1e-15);
        assert!(m.resolve_metric("a/b/none").is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn raw_tree() -> impl Strategy<Value = Characteristic> {
            let leaf = (0.01f64..10.0).prop_map(|w| Characteristic::new("n", w));
            leaf.prop_recursive(4, 30, 5, |inner| {
                ((0.01f64..10.0), prop::collection::vec(inner, 1..5)).prop_map(|(w, mut kids)| {
                    for (i, k) in kids.iter_mut().enumerate() {
                        k.name = format!("c{i}");
                    }
                    Characteristic::new("n", w).with_children(kids)
                })
            })
        }

        fn sums_ok(node: &Characteristic) -> bool {
            if node.children.is_empty() {
                return true;
            }
            let s: f64 = node.children.iter().map(|c| c.weight).sum();
            (s - 1.0).abs() <= WEIGHT_TOLERANCE && node.children.iter().all(sums_ok)
        }

        fn ratios_kept(raw: &Characteristic, norm: &Characteristic) -> bool {
            let pairs = raw.children.iter().zip(&norm.children);
            let first = raw.children.first().zip(norm.children.first());
            let ratio_ok = match first {
                Some((r0, n0)) => pairs.clone().all(|(r, n)| {
                    let expect = r.weight / r0.weight;
                    let got = n.weight / n0.weight;
                    ((expect - got) / expect).abs() <= 1e-12
                }),
                None => true,
            };
            ratio_ok && pairs.clone().all(|(r, n)| ratios_kept(r, n))
        }

        proptest! {
            #[test]
            fn normalization_sums_ratios_idempotence(tree in raw_tree()) {
                let once = normalize_weights(tree.clone()).unwrap();
                prop_assert!(sums_ok(&once));
                prop_assert!(ratios_kept(&tree, &once));
                let twice = normalize_weights(once.clone()).unwrap();
                let m1 = build_model(attrs(), once).unwrap();
                let m2 = build_model(attrs(), twice).unwrap();
                prop_assert!(structurally_equal(&m1, &m2, 1e-12));
                prop_assert_eq!(model_paths(&m1).len(), m1.node_count() - 1);
            }
        }
    }
}
