//! Append-only measurement record store (one JSON object per line).

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::ProcessError;
use crate::model::QualityModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    #[serde(with = "utc_seconds")]
    pub ts: DateTime<Utc>,
    pub metric: String,
    pub value: f64,
    pub source: String,
}

mod utc_seconds {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::AutoSi, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

impl MeasurementRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordIssue {
    #[error("not a JSON object: {0}")]
    Malformed(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("bad timestamp `{0}`: expected ISO-8601 / RFC 3339")]
    BadTimestamp(String),
    #[error("unknown metric path `{0}`")]
    UnknownMetricPath(String),
    #[error("value `{0}` is not a finite number")]
    NonNumericValue(String),
    #[error("field `{0}` must be a string")]
    NotAString(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line number in the input stream or store file.
    pub line: usize,
    pub issue: RecordIssue,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.issue)
    }
}

fn string_field<'a>(obj: &'a serde_json::Map<String, Value>, key: &'static str) -> Result<&'a str, RecordIssue> {
    match obj.get(key) {
        None => Err(RecordIssue::MissingField(key)),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(RecordIssue::NotAString(key)),
    }
}

/// Validates one line of the record format against the model.
pub fn parse_record_line(line: &str, model: &QualityModel) -> Result<MeasurementRecord, RecordIssue> {
    let value: Value = serde_json::from_str(line).map_err(|e| RecordIssue::Malformed(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(RecordIssue::Malformed("expected an object".into()));
    };
    let ts_text = string_field(&obj, "ts")?;
    let ts = DateTime::parse_from_rfc3339(ts_text)
        .map_err(|_| RecordIssue::BadTimestamp(ts_text.to_string()))?
        .with_timezone(&Utc);
    let metric = string_field(&obj, "metric")?;
    if model.resolve_metric(metric).is_none() {
        return Err(RecordIssue::UnknownMetricPath(metric.to_string()));
    }
    let value = match obj.get("value") {
        None => return Err(RecordIssue::MissingField("value")),
        Some(Value::Number(n)) => n.as_f64().filter(|v| v.is_finite()),
        Some(_) => None,
    }
    .ok_or_else(|| RecordIssue::NonNumericValue(obj["value"].to_string()))?;
    let source = string_field(&obj, "source")?;
    Ok(MeasurementRecord {
        ts,
        metric: metric.to_string(),
        value,
        source: source.to_string(),
    })
}

/// A record as read back from the store, with its line number.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRecord {
    pub line: usize,
    pub record: MeasurementRecord,
}

#[derive(Debug, Clone)]
pub struct RecordStore {
    path: PathBuf,
}

impl RecordStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RecordStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends records under an exclusive file lock. Existing content is never
    /// rewritten.
    pub fn append(&self, records: &[MeasurementRecord]) -> Result<(), ProcessError> {
        let unwritable = |source| ProcessError::StoreUnwritable {
            path: self.path.clone(),
            source,
        };
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(unwritable)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(unwritable)?;
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for r in records {
            buf.push_str(&r.to_line());
            buf.push('\n');
        }
        file.lock().map_err(unwritable)?;
        let written = file.write_all(buf.as_bytes()).and_then(|_| file.flush());
        let unlocked = file.unlock();
        written.map_err(unwritable)?;
        unlocked.map_err(unwritable)?;
        Ok(())
    }

    /// Reads a consistent snapshot of the store. Lines that no longer parse
    /// or no longer resolve against `model` are skipped and reported.
    pub fn snapshot(&self, model: &QualityModel) -> Result<(Vec<StoredRecord>, Vec<Diagnostic>), ProcessError> {
        let text = match File::open(&self.path) {
            Ok(file) => {
                file.lock_shared().map_err(|e| ProcessError::io(&self.path, e))?;
                let text = fs::read_to_string(&self.path).map_err(|e| ProcessError::io(&self.path, e));
                let _ = file.unlock();
                text?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(ProcessError::io(&self.path, e)),
        };
        let mut records = Vec::new();
        let mut diagnostics = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_record_line(line, model) {
                Ok(record) => records.push(StoredRecord { line: idx + 1, record }),
                Err(issue) => diagnostics.push(Diagnostic { line: idx + 1, issue }),
            }
        }
        Ok((records, diagnostics))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IngestOutcome {
    pub appended: usize,
    pub diagnostics: Vec<Diagnostic>,
}

/// Validates every line of `input` and appends the well-formed records in
/// arrival order. Malformed lines are reported individually and do not stop
/// the rest from being ingested.
pub fn ingest(input: impl BufRead, store: &RecordStore, model: &QualityModel) -> Result<IngestOutcome, ProcessError> {
    let mut good = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ProcessError::io("<records input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record_line(&line, model) {
            Ok(r) => good.push(r),
            Err(issue) => diagnostics.push(Diagnostic { line: idx + 1, issue }),
        }
    }
    store.append(&good)?;
    Ok(IngestOutcome {
        appended: good.len(),
        diagnostics,
    })
}

/// Canonical timestamp text used in records and report names.
pub(crate) fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmdl::parse_qmdl;

    fn model() -> QualityModel {
        parse_qmdl(
            r#"model "s" { purpose: assessment qem_method: rigorous qem_source: expert organization: hierarchical
            characteristic "q" weight 1 {
              characteristic "a" weight 1 { metric "m" scale ratio unit "" direction higher-better { normalize linear from 0 to 1 } }
              characteristic "b" weight 1 { metric "m" scale ratio unit "" direction higher-better { normalize linear from 0 to 1 } }
            } }"#,
        )
        .unwrap()
    }

    fn line(ts: &str, metric: &str, value: &str) -> String {
        format!(r#"{{"ts":"{ts}","metric":"{metric}","value":{value},"source":"ci"}}"#)
    }

    #[test]
    fn record_line_validation() {
        let m = model();
        assert!(parse_record_line(&line("2026-01-01T00:00:00Z", "a/m", "0.5"), &m).is_ok());
        assert!(matches!(
            parse_record_line(&line("yesterday", "a/m", "0.5"), &m),
            Err(RecordIssue::BadTimestamp(_))
        ));
        assert!(matches!(
            parse_record_line(&line("2026-01-01T00:00:00Z", "a/x", "0.5"), &m),
            Err(RecordIssue::UnknownMetricPath(_))
        ));
        assert!(matches!(
            parse_record_line(&line("2026-01-01T00:00:00Z", "a/m", "\"high\""), &m),
            Err(RecordIssue::NonNumericValue(_))
        ));
        assert!(matches!(parse_record_line("[1]", &m), Err(RecordIssue::Malformed(_))));
        assert!(matches!(
            parse_record_line(r#"{"ts":"2026-01-01T00:00:00Z","metric":"a/m","value":1}"#, &m),
            Err(RecordIssue::MissingField("source"))
        ));
    }

    #[test]
    fn ingest_counts_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::new(dir.path().join("measurements/records.jsonl"));
        let m = model();

        let out = ingest("".as_bytes(), &store, &m).unwrap();
        assert_eq!(out, IngestOutcome::default());

        let three = [
            line("2026-01-01T00:00:00Z", "a/m", "0.5"),
            line("2026-01-01T01:00:00Z", "b/m", "0.7"),
            line("2026-01-01T02:00:00+02:00", "a/m", "0.6"),
        ]
        .join("\n");
        assert_eq!(ingest(three.as_bytes(), &store, &m).unwrap().appended, 3);

        let mixed = [
            line("2026-01-02T00:00:00Z", "a/m", "0.5"),
            line("2026-13-02T00:00:00Z", "a/m", "0.5"),
            line("2026-01-02T01:00:00Z", "b/m", "0.5"),
        ]
        .join("\n");
        let out = ingest(mixed.as_bytes(), &store, &m).unwrap();
        assert_eq!(out.appended, 2);
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].line, 2);
        assert!(matches!(out.diagnostics[0].issue, RecordIssue::BadTimestamp(_)));

        let (records, diags) = store.snapshot(&m).unwrap();
        assert!(diags.is_empty());
        assert_eq!(records.len(), 5);
        assert_eq!(records[2].record.ts.to_rfc3339(), "2026-01-01T00:00:00+00:00");
        assert_eq!(records.iter().map(|r| r.line).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    }

    #[test]
    fn append_preserves_existing_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::new(dir.path().join("records.jsonl"));
        let m = model();
        ingest(line("2026-01-01T00:00:00Z", "a/m", "0.5").as_bytes(), &store, &m).unwrap();
        let before = fs::read(store.path()).unwrap();
        ingest(line("2026-01-01T00:00:00Z", "b/m", "0.25").as_bytes(), &store, &m).unwrap();
        let after = fs::read(store.path()).unwrap();
        assert!(after.starts_with(&before));
        assert!(after.len() > before.len());
    }

    #[test]
    fn missing_store_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::new(dir.path().join("nope.jsonl"));
        let (records, diags) = store.snapshot(&model()).unwrap();
        assert!(records.is_empty() && diags.is_empty());
    }

    #[test]
    fn unwritable_store_reported() {
        let dir = tempfile::tempdir().unwrap();
        // a directory where the file should be
        let path = dir.path().join("records.jsonl");
        fs::create_dir(&path).unwrap();
        let store = RecordStore::new(&path);
        assert!(matches!(
            ingest(line("2026-01-01T00:00:00Z", "a/m", "0.5").as_bytes(), &store, &model()),
            Err(ProcessError::StoreUnwritable { .. })
        ));
    }
}
