//! Measurement scales, raw-to-indicator normalization and threshold verdicts.
//!
//! Every metric is mapped onto a common indicator in `[0, 1]` where higher is
//! always better. Thresholds are expressed on that indicator, never on the raw
//! value, so `reject < accept <= target` has the same meaning regardless of
//! whether the underlying measure improves upwards or downwards.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("nominal metric `{0}` cannot be linearly normalized")]
    NominalNormalization(String),
    #[error("metric `{0}`: normalization endpoints must differ (from == to == {1})")]
    DegenerateNormalization(String, f64),
    #[error("metric `{name}`: direction {direction} contradicts normalization from {from} to {to}")]
    DirectionMismatch {
        name: String,
        direction: Direction,
        from: f64,
        to: f64,
    },
    #[error("threshold `{name}` = {value} lies outside [0, 1]")]
    ThresholdRange { name: &'static str, value: f64 },
    #[error(
        "thresholds must satisfy reject < accept <= target (got reject {reject}, accept {accept}, target {target})"
    )]
    ThresholdOrder { reject: f64, accept: f64, target: f64 },
    #[error("value {0} is not finite")]
    NonFinite(f64),
}

/// Stevens' scale types, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Nominal,
    Ordinal,
    Interval,
    Ratio,
}

impl Scale {
    pub const ALL: [Scale; 4] = [Scale::Nominal, Scale::Ordinal, Scale::Interval, Scale::Ratio];

    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Nominal => "nominal",
            Scale::Ordinal => "ordinal",
            Scale::Interval => "interval",
            Scale::Ratio => "ratio",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scale {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scale::ALL.into_iter().find(|v| v.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::HigherBetter => "higher-better",
            Direction::LowerBetter => "lower-better",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "higher-better" => Ok(Direction::HigherBetter),
            "lower-better" => Ok(Direction::LowerBetter),
            _ => Err(()),
        }
    }
}

/// Statistics that may legitimately be computed on a scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Mode,
    Count,
    Median,
    Percentile,
    ArithmeticMean,
    Variance,
    GeometricMean,
    HarmonicMean,
    Ratio,
}

/// Admissible statistics per scale. Each scale inherits everything admissible
/// on the weaker scales below it.
pub fn admissible_stats(scale: Scale) -> BTreeSet<Statistic> {
    use Statistic::*;
    let mut set = BTreeSet::from([Mode, Count]);
    if scale >= Scale::Ordinal {
        set.extend([Median, Percentile]);
    }
    if scale >= Scale::Interval {
        set.extend([ArithmeticMean, Variance]);
    }
    if scale >= Scale::Ratio {
        set.extend([GeometricMean, HarmonicMean, Ratio]);
    }
    set
}

/// Linear map sending `from_raw` to indicator 0 and `to_raw` to indicator 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearNormalization {
    pub from_raw: f64,
    pub to_raw: f64,
}

impl LinearNormalization {
    pub fn apply(&self, raw: f64) -> f64 {
        ((raw - self.from_raw) / (self.to_raw - self.from_raw)).clamp(0.0, 1.0)
    }
}

/// The four decision levels, all on the indicator scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    reject: f64,
    accept: f64,
    target: f64,
    reference: Option<f64>,
}

impl ThresholdSet {
    pub fn new(reject: f64, accept: f64, target: f64, reference: Option<f64>) -> Result<Self, MetricError> {
        let set = ThresholdSet {
            reject,
            accept,
            target,
            reference,
        };
        validate_thresholds(&set)?;
        Ok(set)
    }

    /// Builds a set without validation; callers must run [`validate_thresholds`].
    pub fn new_unchecked(reject: f64, accept: f64, target: f64, reference: Option<f64>) -> Self {
        ThresholdSet {
            reject,
            accept,
            target,
            reference,
        }
    }

    pub fn reject(&self) -> f64 {
        self.reject
    }

    pub fn accept(&self) -> f64 {
        self.accept
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn reference(&self) -> Option<f64> {
        self.reference
    }
}

pub fn validate_thresholds(t: &ThresholdSet) -> Result<(), MetricError> {
    let named = [
        ("reject", Some(t.reject)),
        ("accept", Some(t.accept)),
        ("target", Some(t.target)),
        ("reference", t.reference),
    ];
    for (name, value) in named {
        if let Some(value) = value {
            if !(0.0..=1.0).contains(&value) {
                return Err(MetricError::ThresholdRange { name, value });
            }
        }
    }
    if !(t.reject < t.accept && t.accept <= t.target) {
        return Err(MetricError::ThresholdOrder {
            reject: t.reject,
            accept: t.accept,
            target: t.target,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictLevel {
    Rejected,
    Marginal,
    Accepted,
    TargetMet,
}

impl VerdictLevel {
    pub const ALL: [VerdictLevel; 4] = [
        VerdictLevel::Rejected,
        VerdictLevel::Marginal,
        VerdictLevel::Accepted,
        VerdictLevel::TargetMet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictLevel::Rejected => "rejected",
            VerdictLevel::Marginal => "marginal",
            VerdictLevel::Accepted => "accepted",
            VerdictLevel::TargetMet => "target-met",
        }
    }
}

impl fmt::Display for VerdictLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceStanding {
    Below,
    AtOrAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Verdict {
    pub level: VerdictLevel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vs_reference: Option<ReferenceStanding>,
}

/// Boundaries: `indicator <= reject` is Rejected, `indicator >= target` is
/// TargetMet, `accept` itself is Accepted. The reference level never changes
/// the verdict.
pub fn evaluate_thresholds(t: &ThresholdSet, indicator: f64) -> Verdict {
    let level = if indicator <= t.reject {
        VerdictLevel::Rejected
    } else if indicator >= t.target {
        VerdictLevel::TargetMet
    } else if indicator < t.accept {
        VerdictLevel::Marginal
    } else {
        VerdictLevel::Accepted
    };
    let vs_reference = t.reference.map(|r| {
        if indicator < r {
            ReferenceStanding::Below
        } else {
            ReferenceStanding::AtOrAbove
        }
    });
    Verdict { level, vs_reference }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    name: String,
    scale: Scale,
    unit: String,
    direction: Direction,
    normalization: LinearNormalization,
    thresholds: Option<ThresholdSet>,
}

impl MetricSpec {
    /// Validates endpoints, direction consistency and thresholds.
    ///
    /// Nominal metrics are accepted here so that they can be declared, but any
    /// attempt to normalize them fails.
    pub fn new(
        name: impl Into<String>,
        scale: Scale,
        unit: impl Into<String>,
        direction: Direction,
        normalization: LinearNormalization,
        thresholds: Option<ThresholdSet>,
    ) -> Result<Self, MetricError> {
        let name = name.into();
        let LinearNormalization { from_raw, to_raw } = normalization;
        for v in [from_raw, to_raw] {
            if !v.is_finite() {
                return Err(MetricError::NonFinite(v));
            }
        }
        if from_raw == to_raw {
            return Err(MetricError::DegenerateNormalization(name, from_raw));
        }
        let consistent = match direction {
            Direction::HigherBetter => from_raw < to_raw,
            Direction::LowerBetter => from_raw > to_raw,
        };
        if !consistent {
            return Err(MetricError::DirectionMismatch {
                name,
                direction,
                from: from_raw,
                to: to_raw,
            });
        }
        if let Some(t) = &thresholds {
            validate_thresholds(t)?;
        }
        Ok(MetricSpec {
            name,
            scale,
            unit: unit.into(),
            direction,
            normalization,
            thresholds,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn normalization(&self) -> LinearNormalization {
        self.normalization
    }

    pub fn thresholds(&self) -> Option<&ThresholdSet> {
        self.thresholds.as_ref()
    }
}

/// Maps a raw observation onto the `[0, 1]` indicator scale, clamping values
/// that fall outside the declared planning range.
pub fn normalize_value(spec: &MetricSpec, raw: f64) -> Result<f64, MetricError> {
    if spec.scale == Scale::Nominal {
        return Err(MetricError::NominalNormalization(spec.name.clone()));
    }
    if !raw.is_finite() {
        return Err(MetricError::NonFinite(raw));
    }
    Ok(spec.normalization.apply(raw))
}
