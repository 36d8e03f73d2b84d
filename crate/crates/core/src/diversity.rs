//! Polymorphism degree of a population of quality models.
//!
//! The degree follows the nucleotide-diversity form `π = Σ_ij x_i x_j π_ij`,
//! summed over ordered pairs with `π_ii = 0`. Here `x_i` is the relative
//! frequency of a model variant in the population under study and `π_ij` is a
//! distance between two models in `[0, 1]`:
//!
//! * **structural**: Jaccard distance between the characteristic path sets;
//! * **weighted**: mean absolute difference of cumulative path weights over
//!   the union of paths, a missing path counting as weight zero.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{model_paths, Organization, QualityModel};

pub const FREQUENCY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiversityError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("duplicate population member `{0}`")]
    DuplicateMember(String),
    #[error("frequency {frequency} of `{id}` lies outside [0, 1]")]
    FrequencyRange { id: String, frequency: f64 },
    #[error("frequencies sum to {0}, expected 1")]
    FrequencySum(f64),
    #[error("{0} models are not comparable, only hierarchical ones")]
    UnsupportedOrganization(Organization),
    #[error("line {line}: {reason}")]
    PopulationFile { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DistanceMode {
    #[default]
    Structural,
    Weighted,
}

impl fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMode::Structural => "structural",
            DistanceMode::Weighted => "weighted",
        })
    }
}

impl FromStr for DistanceMode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structural" => Ok(DistanceMode::Structural),
            "weighted" => Ok(DistanceMode::Weighted),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PopulationMember {
    pub id: String,
    pub frequency: f64,
    pub model: QualityModel,
}

#[derive(Debug, Clone)]
pub struct ModelPopulation {
    members: Vec<PopulationMember>,
}

impl ModelPopulation {
    /// Frequencies must already sum to one within [`FREQUENCY_TOLERANCE`].
    pub fn new(members: Vec<PopulationMember>) -> Result<Self, DiversityError> {
        if members.is_empty() {
            return Err(DiversityError::EmptyPopulation);
        }
        let mut ids = HashSet::new();
        for m in &members {
            if !ids.insert(m.id.as_str()) {
                return Err(DiversityError::DuplicateMember(m.id.clone()));
            }
            if !(0.0..=1.0).contains(&m.frequency) {
                return Err(DiversityError::FrequencyRange {
                    id: m.id.clone(),
                    frequency: m.frequency,
                });
            }
        }
        let sum: f64 = members.iter().map(|m| m.frequency).sum();
        if (sum - 1.0).abs() > FREQUENCY_TOLERANCE {
            return Err(DiversityError::FrequencySum(sum));
        }
        Ok(ModelPopulation { members })
    }

    /// Accepts frequencies summing to within `[0.99, 1.01]` and rescales them
    /// to sum to one; anything further off is rejected.
    pub fn renormalized(mut members: Vec<PopulationMember>) -> Result<Self, DiversityError> {
        let sum: f64 = members.iter().map(|m| m.frequency).sum();
        if members.is_empty() {
            return Err(DiversityError::EmptyPopulation);
        }
        if !(0.99..=1.01).contains(&sum) {
            return Err(DiversityError::FrequencySum(sum));
        }
        for m in &mut members {
            m.frequency /= sum;
        }
        Self::new(members)
    }

    pub fn members(&self) -> &[PopulationMember] {
        &self.members
    }
}

fn hierarchical(model: &QualityModel) -> Result<(), DiversityError> {
    match model.organization() {
        Organization::Hierarchical => Ok(()),
        other => Err(DiversityError::UnsupportedOrganization(other)),
    }
}

pub fn model_distance(a: &QualityModel, b: &QualityModel, mode: DistanceMode) -> Result<f64, DiversityError> {
    hierarchical(a)?;
    hierarchical(b)?;
    let pa = model_paths(a);
    let pb = model_paths(b);
    let union: Vec<&String> = pa.union(&pb).collect();
    if union.is_empty() {
        return Ok(0.0);
    }
    let d = match mode {
        DistanceMode::Structural => {
            let shared = pa.intersection(&pb).count();
            1.0 - shared as f64 / union.len() as f64
        }
        DistanceMode::Weighted => {
            let total: f64 = union
                .iter()
                .map(|p| {
                    let wa = a.path_weight(p).unwrap_or(0.0);
                    let wb = b.path_weight(p).unwrap_or(0.0);
                    (wa - wb).abs()
                })
                .sum();
            total / union.len() as f64
        }
    };
    Ok(d)
}

/// All pairwise distances, keyed by `(i, j)` with `i < j`.
pub fn pairwise_distances(
    pop: &ModelPopulation,
    mode: DistanceMode,
) -> Result<BTreeMap<(usize, usize), f64>, DiversityError> {
    let members = pop.members();
    let mut out = BTreeMap::new();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            out.insert((i, j), model_distance(&members[i].model, &members[j].model, mode)?);
        }
    }
    Ok(out)
}

/// `π = 2 Σ_{i<j} x_i x_j π_ij`, the ordered-pair sum with zero diagonal.
pub fn polymorphism_degree(pop: &ModelPopulation, mode: DistanceMode) -> Result<f64, DiversityError> {
    let members = pop.members();
    let distances = pairwise_distances(pop, mode)?;
    let half: f64 = distances
        .iter()
        .map(|(&(i, j), d)| members[i].frequency * members[j].frequency * d)
        .sum();
    Ok(2.0 * half)
}

/// One `(frequency, path)` entry of a population file.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationEntry {
    pub line: usize,
    pub frequency: f64,
    pub path: String,
}

/// Parses `<frequency> <model-file-path>` lines; `#` starts a comment.
pub fn parse_population_file(text: &str) -> Result<Vec<PopulationEntry>, DiversityError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |reason: String| DiversityError::PopulationFile { line, reason };
        let (freq, path) = content
            .split_once(char::is_whitespace)
            .ok_or_else(|| err("expected `<frequency> <model-file-path>`".into()))?;
        let frequency: f64 = freq
            .parse()
            .ok()
            .filter(|f: &f64| f.is_finite())
            .ok_or_else(|| err(format!("`{freq}` is not a frequency")))?;
        out.push(PopulationEntry {
            line,
            frequency,
            path: path.trim().to_string(),
        });
    }
    Ok(out)
}
