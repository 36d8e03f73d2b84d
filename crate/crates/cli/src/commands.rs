use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::Utc;
use qualimeter_core::aggregation::{scale_admissibility, AggregationError};
use qualimeter_core::diversity::{
    pairwise_distances, parse_population_file, polymorphism_degree, ModelPopulation, PopulationMember,
};
use qualimeter_core::model::QualityModel;
use qualimeter_core::process::{
    content_hash, evaluate_records, ingest as ingest_records, init_phase, iso25040_coverage, parse_objectives_file,
    parse_record_line, plan_phase, EvaluationReport, MeasurementContext, PlanSettings, ProcessError, Project,
    RecordStore, StoredRecord,
};
use qualimeter_core::qmdl::{parse_qmdl, serialize_qmdl};
use qualimeter_core::rules::{check, default_ruleset, sort_violations, RuleViolation, Ruleset, Severity};
use serde_json::{json, Value};

use crate::{
    DiversityArgs, EvaluateArgs, IngestArgs, InitArgs, PlanArgs, ReportArgs, ReportFormat, RunArgs, TextOrJson,
    ValidateArgs,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Ok = 0,
    Validation = 1,
    Usage = 2,
    Io = 3,
}

impl From<Code> for ExitCode {
    fn from(c: Code) -> Self {
        ExitCode::from(c as u8)
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub message: String,
}

impl Failure {
    fn new(code: Code, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(Code::Validation, message)
    }
}

impl From<ProcessError> for Failure {
    fn from(e: ProcessError) -> Self {
        let code = match &e {
            ProcessError::Io { .. } | ProcessError::StoreUnwritable { .. } | ProcessError::NoReport(_) => Code::Io,
            ProcessError::InvalidFrequency(_) | ProcessError::InvalidLifecycleStage(_) => Code::Usage,
            _ => Code::Validation,
        };
        if let ProcessError::ModelRuleViolations(vs)
        | ProcessError::Aggregation(AggregationError::ModelRuleViolations(vs)) = &e
        {
            for v in vs {
                eprintln!("{v}");
            }
        }
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<Code, Failure>;

pub struct Ctx {
    root: PathBuf,
}

impl Ctx {
    pub fn new(project: Option<PathBuf>) -> Self {
        Ctx {
            root: project.unwrap_or_else(|| PathBuf::from(".")),
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() || p == Path::new("-") {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(Code::Io, format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::new(Code::Io, format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::new(Code::Io, format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<QualityModel, Failure> {
    let text = read(path)?;
    parse_qmdl(&text).map_err(|e| Failure::validation(format!("{}:{e}", path.display())))
}

fn load_ruleset(ctx: &Ctx, overrides: Option<&Path>) -> Result<Ruleset, Failure> {
    let Some(p) = overrides else {
        return Ok(default_ruleset());
    };
    let path = ctx.resolve(p);
    default_ruleset()
        .with_overrides(&read(&path)?)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json serializes"));
}

fn violations_json(vs: &[RuleViolation]) -> Value {
    serde_json::to_value(vs).expect("violations serialize")
}

pub fn validate(ctx: &Ctx, a: ValidateArgs) -> CmdResult {
    let path = ctx.resolve(&a.model);
    let json = a.format == TextOrJson::Json;
    let text = read(&path)?;
    let model = match parse_qmdl(&text) {
        Ok(m) => m,
        Err(e) => {
            if json {
                let span = e.span();
                print_json(&json!({
                    "model": a.model,
                    "valid": false,
                    "errors": 1,
                    "warnings": 0,
                    "parse_error": {"line": span.line, "column": span.column, "message": e.to_string()},
                    "violations": [],
                }));
                return Ok(Code::Validation);
            }
            return Err(Failure::validation(format!("{}:{e}", path.display())));
        }
    };
    let ruleset = load_ruleset(ctx, a.ruleset.as_deref())?;
    let mut violations = check(&model, &ruleset).map_err(|e| Failure::validation(e.to_string()))?;
    violations.extend(scale_admissibility(&model, model.aggregation()));
    sort_violations(&mut violations);
    let errors = violations.iter().filter(|v| v.severity == Severity::Error).count();
    let warnings = violations.len() - errors;
    if json {
        print_json(&json!({
            "model": a.model,
            "valid": errors == 0,
            "errors": errors,
            "warnings": warnings,
            "violations": violations_json(&violations),
        }));
    } else {
        for v in &violations {
            println!("{v}");
        }
        println!("{errors} errors, {warnings} warnings");
    }
    Ok(if errors == 0 { Code::Ok } else { Code::Validation })
}

pub fn serialize(ctx: &Ctx, model: &Path) -> CmdResult {
    let model = load_model(&ctx.resolve(model))?;
    print!("{}", serialize_qmdl(&model));
    Ok(Code::Ok)
}

fn read_records(path: &Path, model: &QualityModel) -> Result<(Vec<StoredRecord>, usize), Failure> {
    let text = read(path)?;
    let mut records = Vec::new();
    let mut rejected = 0;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_record_line(line, model) {
            Ok(record) => records.push(StoredRecord { line: idx + 1, record }),
            Err(issue) => {
                rejected += 1;
                eprintln!("{}:{}: {issue}", path.display(), idx + 1);
            }
        }
    }
    Ok((records, rejected))
}

fn render(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.dashboard_json(),
        ReportFormat::Md => report.summary_md(),
        ReportFormat::Detailed => report.detailed_json(),
    }
}

pub fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> CmdResult {
    let model = load_model(&ctx.resolve(&a.model))?;
    let (records, rejected) = read_records(&ctx.resolve(&a.records), &model)?;
    let ruleset = load_ruleset(ctx, a.ruleset.as_deref())?;
    let horizon = chrono::Duration::from_std(a.horizon).map_err(|e| Failure::new(Code::Usage, e.to_string()))?;
    let operator = a.operator.unwrap_or(model.aggregation());
    let evaluation = match evaluate_records(&model, &records, a.as_of, &ruleset, operator, horizon) {
        Ok(e) => e,
        Err(ProcessError::Aggregation(AggregationError::ModelRuleViolations(vs))) if a.format != ReportFormat::Md => {
            for v in &vs {
                eprintln!("{v}");
            }
            print_json(&json!({
                "error": "model has blocking rule violations",
                "violations": violations_json(&vs),
            }));
            return Ok(Code::Validation);
        }
        Err(e) => return Err(e.into()),
    };
    for d in &evaluation.diagnostics {
        eprintln!("warning: {d}");
    }
    let report = EvaluationReport::adhoc(&model, evaluation);
    print!("{}", render(&report, a.format));
    Ok(if rejected == 0 { Code::Ok } else { Code::Validation })
}

pub fn diversity(ctx: &Ctx, a: DiversityArgs) -> CmdResult {
    let json = a.format == TextOrJson::Json;
    let fail = |message: String| -> CmdResult {
        if json {
            print_json(&json!({ "error": message }));
            Ok(Code::Validation)
        } else {
            Err(Failure::validation(message))
        }
    };
    let path = ctx.resolve(&a.population);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let entries = match parse_population_file(&read(&path)?) {
        Ok(e) => e,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    let mut members = Vec::with_capacity(entries.len());
    for entry in entries {
        let model_path = base.join(&entry.path);
        let model = match load_model(&model_path) {
            Ok(m) => m,
            Err(f) if f.code == Code::Validation => return fail(f.message),
            Err(f) => return Err(f),
        };
        members.push(PopulationMember {
            id: entry.path,
            frequency: entry.frequency,
            model,
        });
    }
    let computed = ModelPopulation::renormalized(members).and_then(|pop| {
        let pi = polymorphism_degree(&pop, a.mode)?;
        let distances = pairwise_distances(&pop, a.mode)?;
        Ok((pop, pi, distances))
    });
    let (pop, pi, distances) = match computed {
        Ok(v) => v,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    if json {
        let ms = pop.members();
        print_json(&json!({
            "mode": a.mode.to_string(),
            "pi": pi,
            "members": ms.iter().map(|m| json!({"id": m.id, "frequency": m.frequency})).collect::<Vec<_>>(),
            "distances": distances
                .iter()
                .map(|(&(i, j), d)| json!({"a": ms[i].id, "b": ms[j].id, "distance": d}))
                .collect::<Vec<_>>(),
        }));
    } else {
        println!("pi = {pi:.9}");
    }
    Ok(Code::Ok)
}

pub fn init(ctx: &Ctx, a: InitArgs) -> CmdResult {
    let path = ctx.resolve(&a.objectives);
    let input =
        parse_objectives_file(&read(&path)?).map_err(|e| Failure::validation(format!("{}:{e}", path.display())))?;
    let context = init_phase(input.objectives, input.fields, input.lessons)?;
    let mut text = serde_json::to_string_pretty(&context).expect("context serializes");
    text.push('\n');
    write(&ctx.resolve(&a.out), &text)?;
    eprintln!(
        "{} objective(s) written to {}",
        context.objectives.len(),
        a.out.display()
    );
    Ok(Code::Ok)
}

pub fn plan(ctx: &Ctx, a: PlanArgs) -> CmdResult {
    let context_path = ctx.resolve(&a.context);
    let context: MeasurementContext = serde_json::from_str(&read(&context_path)?)
        .map_err(|e| Failure::validation(format!("{}: {e}", context_path.display())))?;
    let model = load_model(&ctx.resolve(&a.model))?;
    let project = Project::from_plan_path(ctx.resolve(&a.out));
    let mut settings = PlanSettings::new(Project::model_rel_path(&model), a.frequency);
    settings.lifecycle_stage = a.lifecycle;
    settings.operator_override = a.operator;
    settings.criteria_notes = a.criteria;
    settings.ruleset = load_ruleset(ctx, a.ruleset.as_deref())?;
    let plan = plan_phase(&context, &model, settings, Utc::now())?;
    project.install_model(&model)?;
    project.write_plan(&plan)?;
    for missing in iso25040_coverage(&plan) {
        eprintln!(
            "warning: plan does not cover ISO/IEC 25040 activity `{}`",
            missing.as_str()
        );
    }
    println!("{}", plan.plan_id);
    Ok(Code::Ok)
}

pub fn ingest(ctx: &Ctx, a: IngestArgs) -> CmdResult {
    let project = Project::from_plan_path(ctx.resolve(&a.plan));
    let plan = project.load_plan()?;
    let model = project.load_model(&plan)?;
    let actual = content_hash(&model);
    if actual != plan.model_ref.hash {
        return Err(ProcessError::ModelHashMismatch {
            expected: plan.model_ref.hash,
            actual,
        }
        .into());
    }
    let store: RecordStore = project.store(&plan);
    let source = ctx.resolve(&a.records);
    let outcome = if source == Path::new("-") {
        ingest_records(io::stdin().lock(), &store, &model)?
    } else {
        let file = fs::File::open(&source).map_err(|e| Failure::new(Code::Io, format!("{}: {e}", source.display())))?;
        ingest_records(BufReader::new(file), &store, &model)?
    };
    for d in &outcome.diagnostics {
        eprintln!("{}:{}: {}", a.records.display(), d.line, d.issue);
    }
    println!(
        "appended {} record(s), rejected {}",
        outcome.appended,
        outcome.diagnostics.len()
    );
    Ok(if outcome.diagnostics.is_empty() {
        Code::Ok
    } else {
        Code::Validation
    })
}

pub fn run(ctx: &Ctx, a: RunArgs) -> CmdResult {
    let project = Project::from_plan_path(ctx.resolve(&a.plan));
    let (report, paths) = project.run(a.as_of)?;
    for d in &report.evaluation.diagnostics {
        eprintln!("warning: {d}");
    }
    match a.format {
        TextOrJson::Json => print!("{}", report.dashboard_json()),
        TextOrJson::Text => {
            match report.root_score() {
                Some(s) => println!("root score: {s:.9}"),
                None => println!("root score: no data"),
            }
            println!("reports: {}", paths.dir.display());
        }
    }
    Ok(Code::Ok)
}

pub fn report(ctx: &Ctx, a: ReportArgs) -> CmdResult {
    let project = Project::from_plan_path(ctx.resolve(&a.plan));
    let paths = match a.as_of {
        Some(t) => {
            let paths = project.report_paths(t);
            if !paths.detailed.is_file() {
                return Err(ProcessError::NoReport(paths.dir).into());
            }
            paths
        }
        None => project.latest_report()?,
    };
    let file = match a.format {
        ReportFormat::Json => paths.dashboard,
        ReportFormat::Md => paths.summary,
        ReportFormat::Detailed => paths.detailed,
    };
    print!("{}", read(&file)?);
    Ok(Code::Ok)
}
