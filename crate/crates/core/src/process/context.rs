//! Initial phase: objectives, measurement context and lessons learned.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ProcessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_requirement: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextFields {
    pub scope_boundaries: String,
    pub dependencies: Vec<String>,
    pub environment: String,
}

/// The merged output of the initial phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementContext {
    pub objectives: Vec<Objective>,
    pub scope_boundaries: String,
    pub dependencies: Vec<String>,
    pub environment: String,
    /// Lessons learned carried over from earlier iterations; empty on the
    /// first one.
    pub improvement_notes: Vec<String>,
}

pub fn init_phase(
    objectives: Vec<Objective>,
    fields: ContextFields,
    lessons: Vec<String>,
) -> Result<MeasurementContext, ProcessError> {
    if objectives.is_empty() {
        return Err(ProcessError::NoObjectives);
    }
    let mut seen = HashSet::new();
    for o in &objectives {
        if !seen.insert(o.id.as_str()) {
            return Err(ProcessError::DuplicateObjectiveId(o.id.clone()));
        }
    }
    Ok(MeasurementContext {
        objectives,
        scope_boundaries: fields.scope_boundaries,
        dependencies: fields.dependencies,
        environment: fields.environment,
        improvement_notes: lessons,
    })
}

/// Parsed content of an objectives file, ready for [`init_phase`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectivesInput {
    pub objectives: Vec<Objective>,
    pub fields: ContextFields,
    pub lessons: Vec<String>,
}

/// Reads the `key: value` objectives format:
///
/// ```text
/// objective: O1 | keep defect density low | REQ-12
/// scope: body controller firmware
/// dependency: supplier static analysis export
/// environment: nightly CI
/// lesson: thresholds were too lax last release
/// ```
///
/// `scope` and `environment` lines accumulate (joined by newlines). The
/// requirement column of an objective is optional.
pub fn parse_objectives_file(text: &str) -> Result<ObjectivesInput, ProcessError> {
    let mut input = ObjectivesInput::default();
    let append = |target: &mut String, value: &str| {
        if !target.is_empty() {
            target.push('\n');
        }
        target.push_str(value);
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let err = |reason: String| ProcessError::ObjectivesFile { line, reason };
        let (key, value) = content
            .split_once(':')
            .ok_or_else(|| err(format!("expected `key: value`, got `{content}`")))?;
        let value = value.trim();
        match key.trim() {
            "objective" => {
                let mut parts = value.split('|').map(str::trim);
                let id = parts.next().filter(|s| !s.is_empty());
                let text = parts.next().filter(|s| !s.is_empty());
                let (Some(id), Some(text)) = (id, text) else {
                    return Err(err("expected `objective: <id> | <text> [| <requirement>]`".into()));
                };
                let linked_requirement = parts.next().filter(|s| !s.is_empty()).map(str::to_string);
                if parts.next().is_some() {
                    return Err(err("too many `|` separated fields".into()));
                }
                input.objectives.push(Objective {
                    id: id.to_string(),
                    text: text.to_string(),
                    linked_requirement,
                });
            }
            "scope" => append(&mut input.fields.scope_boundaries, value),
            "environment" => append(&mut input.fields.environment, value),
            "dependency" => input.fields.dependencies.push(value.to_string()),
            "lesson" => input.lessons.push(value.to_string()),
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    Ok(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(id: &str) -> Objective {
        Objective {
            id: id.into(),
            text: format!("objective {id}"),
            linked_requirement: None,
        }
    }

    #[test]
    fn first_iteration_without_lessons() {
        let ctx = init_phase(vec![objective("O1")], ContextFields::default(), vec![]).unwrap();
        assert_eq!(ctx.objectives.len(), 1);
        assert!(ctx.improvement_notes.is_empty());
    }

    #[test]
    fn objectives_required_and_unique() {
        assert!(matches!(
            init_phase(vec![], ContextFields::default(), vec![]),
            Err(ProcessError::NoObjectives)
        ));
        let dup = vec![objective("O1"), objective("O2"), objective("O1")];
        assert!(matches!(
            init_phase(dup, ContextFields::default(), vec![]),
            Err(ProcessError::DuplicateObjectiveId(id)) if id == "O1"
        ));
    }

    #[test]
    fn lessons_and_fields_pass_through() {
        let fields = ContextFields {
            scope_boundaries: "ECU firmware".into(),
            dependencies: vec!["toolchain".into()],
            environment: "HIL bench".into(),
        };
        let lessons = vec!["thresholds too lax".to_string(), "collect weekly".to_string()];
        let ctx = init_phase(vec![objective("O1"), objective("O2")], fields.clone(), lessons.clone()).unwrap();
        assert_eq!(ctx.improvement_notes, lessons);
        assert_eq!(ctx.scope_boundaries, fields.scope_boundaries);
        assert_eq!(ctx.dependencies, fields.dependencies);
        assert_eq!(ctx.environment, fields.environment);
    }

    #[test]
    fn objectives_file_format() {
        let text = "# ctx\nobjective: O1 | keep defects low | REQ-7\nobjective: O2 | fast boot\nscope: ECU\nscope: body domain\ndependency: AUTOSAR\nenvironment: CI\nlesson: none yet\n";
        let input = parse_objectives_file(text).unwrap();
        assert_eq!(input.objectives.len(), 2);
        assert_eq!(input.objectives[0].linked_requirement.as_deref(), Some("REQ-7"));
        assert_eq!(input.objectives[1].linked_requirement, None);
        assert_eq!(input.fields.scope_boundaries, "ECU\nbody domain");
        assert_eq!(input.lessons, ["none yet"]);
        assert!(matches!(
            parse_objectives_file("objective: O1"),
            Err(ProcessError::ObjectivesFile { line: 1, .. })
        ));
        assert!(matches!(
            parse_objectives_file("\nfoo: bar"),
            Err(ProcessError::ObjectivesFile { line: 2, .. })
        ));
    }
}
