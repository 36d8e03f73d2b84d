//! QMDL: the plain-text quality model definition language.
//!
//! ```text
//! model      := "model" STRING "{" header char agg? "}"
//! header     := "purpose:" PURPOSE  "qem_method:" QMETHOD  "qem_source:" QSOURCE
//!               "organization:" ORG  ("ruleset:" TOKEN)? ("derives_from:" TOKEN ("," TOKEN)*)?
//!               ("context:" STRING)?
//! char       := "characteristic" STRING "weight" NUMBER "{" (char+ | metric+ | ) "}"
//! metric     := "metric" STRING "scale" SCALE "unit" STRING "direction" DIR
//!               "{" "normalize" "linear" "from" NUMBER "to" NUMBER
//!                   ("thresholds" "reject" NUMBER "accept" NUMBER "target" NUMBER ("reference" NUMBER)?)? "}"
//! agg        := "aggregation" AGGOP
//! ```
//!
//! `#` starts a comment running to the end of the line. Strings are
//! double-quoted with backslash escapes. Omitted optional attributes default to
//! ruleset `default`, no lineage, empty context and the weighted arithmetic
//! mean.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::aggregation::AggregationOperator;
use crate::metrics::{Direction, LinearNormalization, MetricSpec, Scale, ThresholdSet};
use crate::model::{
    is_valid_name, AssessmentMethod, Characteristic, InformationSource, ModelBuilder, ModelError, Organization,
    Purpose, QualityModel,
};

const MAX_DEPTH: usize = 64;

/// 1-based position in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QmdlError {
    #[error("{span}: syntax error: expected {expected}, found {found}")]
    Syntax {
        span: SourceSpan,
        expected: String,
        found: String,
    },
    #[error("{span}: {message}")]
    Semantic { span: SourceSpan, message: String },
    #[error("{span}: {source}")]
    Model { span: SourceSpan, source: ModelError },
}

impl QmdlError {
    pub fn span(&self) -> SourceSpan {
        match self {
            QmdlError::Syntax { span, .. } | QmdlError::Semantic { span, .. } | QmdlError::Model { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Str(String),
    Word(String),
    LBrace,
    RBrace,
    Comma,
    Colon,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '+')
}

fn lex(text: &str) -> Result<Vec<(Tok, SourceSpan)>, QmdlError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let span = SourceSpan { line, column };
        match c {
            c if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    bump!();
                }
            }
            '{' | '}' | ',' | ':' => {
                bump!();
                out.push((
                    match c {
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        ',' => Tok::Comma,
                        _ => Tok::Colon,
                    },
                    span,
                ));
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    let here = SourceSpan { line, column };
                    match bump!() {
                        None => {
                            return Err(QmdlError::Syntax {
                                span: here,
                                expected: "closing `\"`".into(),
                                found: "end of input".into(),
                            })
                        }
                        Some('"') => break,
                        Some('\\') => {
                            let esc = SourceSpan { line, column };
                            match bump!() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some('r') => s.push('\r'),
                                other => {
                                    return Err(QmdlError::Syntax {
                                        span: esc,
                                        expected: "escape sequence (\\\" \\\\ \\n \\t \\r)".into(),
                                        found: other.map_or("end of input".into(), |c| format!("`{c}`")),
                                    })
                                }
                            }
                        }
                        Some(c) => s.push(c),
                    }
                }
                out.push((Tok::Str(s), span));
            }
            c if is_word_char(c) => {
                let mut w = String::new();
                while let Some(&c) = chars.peek() {
                    if !is_word_char(c) {
                        break;
                    }
                    w.push(c);
                    bump!();
                }
                out.push((Tok::Word(w), span));
            }
            other => {
                return Err(QmdlError::Syntax {
                    span,
                    expected: "token".into(),
                    found: format!("character {other:?}"),
                })
            }
        }
    }
    out.push((Tok::Eof, SourceSpan { line, column }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn peek_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Word(x) if x == w)
    }

    fn advance(&mut self) -> (Tok, SourceSpan) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, expected: impl Into<String>) -> Result<T, QmdlError> {
        Err(QmdlError::Syntax {
            span: self.span(),
            expected: expected.into(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<SourceSpan, QmdlError> {
        if *self.peek() == tok {
            Ok(self.advance().1)
        } else {
            self.syntax(tok.to_string())
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<SourceSpan, QmdlError> {
        if self.peek_word(kw) {
            Ok(self.advance().1)
        } else {
            self.syntax(format!("`{kw}`"))
        }
    }

    fn header_key(&mut self, key: &str) -> Result<SourceSpan, QmdlError> {
        let span = self.keyword(key)?;
        if *self.peek() != Tok::Colon {
            return self.syntax(format!("`{key}:`"));
        }
        self.advance();
        Ok(span)
    }

    fn string(&mut self) -> Result<(String, SourceSpan), QmdlError> {
        match self.peek() {
            Tok::Str(_) => match self.advance() {
                (Tok::Str(s), span) => Ok((s, span)),
                _ => unreachable!(),
            },
            _ => self.syntax("STRING"),
        }
    }

    fn word(&mut self, what: &str) -> Result<(String, SourceSpan), QmdlError> {
        match self.peek() {
            Tok::Word(_) => match self.advance() {
                (Tok::Word(w), span) => Ok((w, span)),
                _ => unreachable!(),
            },
            _ => self.syntax(what.to_string()),
        }
    }

    fn enum_value<T: FromStr>(&mut self, what: &str, allowed: &[&str]) -> Result<T, QmdlError> {
        let (w, span) = self.word(what)?;
        w.parse().map_err(|_| QmdlError::Semantic {
            span,
            message: format!("invalid {what} `{w}`; expected one of: {}", allowed.join(", ")),
        })
    }

    fn number(&mut self) -> Result<(f64, SourceSpan), QmdlError> {
        let span = self.span();
        let parsed = match self.peek() {
            Tok::Word(w) if w.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.') => {
                w.parse::<f64>().ok()
            }
            _ => None,
        };
        match parsed {
            Some(v) if v.is_finite() => {
                self.advance();
                Ok((v, span))
            }
            Some(_) => Err(QmdlError::Semantic {
                span,
                message: "number must be finite".into(),
            }),
            None => self.syntax("NUMBER"),
        }
    }

    fn token(&mut self, what: &str) -> Result<String, QmdlError> {
        let (w, span) = self.word(what)?;
        if !is_valid_name(&w) {
            return Err(QmdlError::Semantic {
                span,
                message: format!("invalid {what} `{w}`: expected [A-Za-z0-9_-]+"),
            });
        }
        Ok(w)
    }

    fn name(&mut self, what: &str) -> Result<(String, SourceSpan), QmdlError> {
        let (s, span) = self.string()?;
        if !is_valid_name(&s) {
            return Err(QmdlError::Semantic {
                span,
                message: format!("invalid {what} name {s:?}: expected [A-Za-z0-9_-]+"),
            });
        }
        Ok((s, span))
    }

    fn model(&mut self) -> Result<QualityModel, QmdlError> {
        let model_span = self.keyword("model")?;
        let (title, _) = self.string()?;
        self.expect(Tok::LBrace)?;

        self.header_key("purpose")?;
        let purpose: Purpose = self.enum_value("purpose", &names(&Purpose::ALL.map(Purpose::as_str)))?;
        self.header_key("qem_method")?;
        let method: AssessmentMethod = self.enum_value(
            "qem_method",
            &names(&AssessmentMethod::ALL.map(AssessmentMethod::as_str)),
        )?;
        self.header_key("qem_source")?;
        let source: InformationSource = self.enum_value(
            "qem_source",
            &names(&InformationSource::ALL.map(InformationSource::as_str)),
        )?;
        self.header_key("organization")?;
        let organization: Organization =
            self.enum_value("organization", &names(&Organization::ALL.map(Organization::as_str)))?;

        let mut ruleset = "default".to_string();
        if self.peek_word("ruleset") {
            self.header_key("ruleset")?;
            ruleset = self.token("ruleset")?;
        }
        let mut lineage = Vec::new();
        if self.peek_word("derives_from") {
            self.header_key("derives_from")?;
            lineage.push(self.token("model id")?);
            while *self.peek() == Tok::Comma {
                self.advance();
                lineage.push(self.token("model id")?);
            }
        }
        let mut context = String::new();
        if self.peek_word("context") {
            self.header_key("context")?;
            context = self.string()?.0;
        }

        let root = self.characteristic(0)?;
        let mut aggregation = AggregationOperator::default();
        if self.peek_word("aggregation") {
            self.advance();
            aggregation = self.enum_value(
                "aggregation operator",
                &names(&AggregationOperator::ALL.map(|o| o.as_str())),
            )?;
        }
        self.expect(Tok::RBrace)?;
        if *self.peek() != Tok::Eof {
            return self.syntax("end of input");
        }

        ModelBuilder::new()
            .id(model_id(&title))
            .title(title)
            .context(context)
            .purpose(purpose)
            .assessment_method(method)
            .information_source(source)
            .organization(organization)
            .ruleset(ruleset)
            .lineage(lineage)
            .aggregation(aggregation)
            .root(root)
            .build()
            .map_err(|source| QmdlError::Model {
                span: model_span,
                source,
            })
    }

    fn characteristic(&mut self, depth: usize) -> Result<Characteristic, QmdlError> {
        let start = self.keyword("characteristic")?;
        if depth > MAX_DEPTH {
            return Err(QmdlError::Semantic {
                span: start,
                message: format!("characteristics nested deeper than {MAX_DEPTH} levels"),
            });
        }
        let (name, _) = self.name("characteristic")?;
        self.keyword("weight")?;
        let (weight, weight_span) = self.number()?;
        if weight <= 0.0 {
            return Err(QmdlError::Model {
                span: weight_span,
                source: ModelError::NonPositiveWeight { path: name, weight },
            });
        }
        self.expect(Tok::LBrace)?;
        let mut node = Characteristic::new(name, weight);
        if self.peek_word("characteristic") {
            let mut seen = HashSet::new();
            while self.peek_word("characteristic") {
                let span = self.span();
                let child = self.characteristic(depth + 1)?;
                if !seen.insert(child.name.clone()) {
                    return Err(QmdlError::Model {
                        span,
                        source: ModelError::DuplicateSiblingName {
                            parent: node.name.clone(),
                            name: child.name,
                        },
                    });
                }
                node.children.push(child);
            }
            if *self.peek() != Tok::RBrace {
                return self.syntax("`characteristic` or `}`");
            }
        } else if self.peek_word("metric") {
            let mut seen = HashSet::new();
            while self.peek_word("metric") {
                let span = self.span();
                let metric = self.metric()?;
                if !seen.insert(metric.name().to_string()) {
                    return Err(QmdlError::Model {
                        span,
                        source: ModelError::DuplicateMetricName {
                            path: node.name.clone(),
                            name: metric.name().to_string(),
                        },
                    });
                }
                node.metrics.push(metric);
            }
            if *self.peek() != Tok::RBrace {
                return self.syntax("`metric` or `}`");
            }
        } else if *self.peek() != Tok::RBrace {
            return self.syntax("`characteristic`, `metric` or `}`");
        }
        self.advance();
        Ok(node)
    }

    fn metric(&mut self) -> Result<MetricSpec, QmdlError> {
        let span = self.keyword("metric")?;
        let (name, _) = self.name("metric")?;
        self.keyword("scale")?;
        let scale: Scale = self.enum_value("scale", &names(&Scale::ALL.map(Scale::as_str)))?;
        self.keyword("unit")?;
        let (unit, _) = self.string()?;
        self.keyword("direction")?;
        let direction: Direction = self.enum_value("direction", &["higher-better", "lower-better"])?;
        self.expect(Tok::LBrace)?;
        self.keyword("normalize")?;
        self.keyword("linear")?;
        self.keyword("from")?;
        let (from_raw, _) = self.number()?;
        self.keyword("to")?;
        let (to_raw, _) = self.number()?;
        let mut thresholds = None;
        if self.peek_word("thresholds") {
            let t_span = self.advance().1;
            self.keyword("reject")?;
            let (reject, _) = self.number()?;
            self.keyword("accept")?;
            let (accept, _) = self.number()?;
            self.keyword("target")?;
            let (target, _) = self.number()?;
            let mut reference = None;
            if self.peek_word("reference") {
                self.advance();
                reference = Some(self.number()?.0);
            }
            thresholds =
                Some(
                    ThresholdSet::new(reject, accept, target, reference).map_err(|e| QmdlError::Semantic {
                        span: t_span,
                        message: e.to_string(),
                    })?,
                );
        }
        self.expect(Tok::RBrace)?;
        MetricSpec::new(
            name,
            scale,
            unit,
            direction,
            LinearNormalization { from_raw, to_raw },
            thresholds,
        )
        .map_err(|e| QmdlError::Semantic {
            span,
            message: e.to_string(),
        })
    }
}

fn names<const N: usize>(v: &[&'static str; N]) -> Vec<&'static str> {
    v.to_vec()
}

/// Derives a token id from the model title.
pub fn model_id(title: &str) -> String {
    let id: String = title
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '-'
            }
        })
        .collect();
    if id.is_empty() {
        "model".to_string()
    } else {
        id
    }
}

pub fn parse_qmdl(text: &str) -> Result<QualityModel, QmdlError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.model()
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Fixed 9-digit formatting with trailing zeros trimmed.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:.9}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

/// Rounds a normalized sibling group to 9 decimals so that the printed
/// values add up to exactly one (largest remainder).
fn sibling_weight_units(weights: &[f64]) -> Vec<u64> {
    const SCALE: f64 = 1e9;
    let mut units: Vec<u64> = weights.iter().map(|w| (w * SCALE).floor().max(0.0) as u64).collect();
    let assigned: u64 = units.iter().sum();
    let deficit = (SCALE as u64).saturating_sub(assigned) as usize;
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = weights[a] * SCALE - units[a] as f64;
        let rb = weights[b] * SCALE - units[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(deficit) {
        units[i] += 1;
    }
    units
}

fn format_units(units: u64) -> String {
    if units >= 1_000_000_000 {
        return "1".to_string();
    }
    let frac = format!("{units:09}");
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        "0".to_string()
    } else {
        format!("0.{frac}")
    }
}

fn write_characteristic(out: &mut String, node: &Characteristic, weight: &str, indent: usize) {
    let pad = "  ".repeat(indent);
    out.push_str(&format!(
        "{pad}characteristic {} weight {weight} {{\n",
        escape(&node.name)
    ));
    if !node.children.is_empty() {
        let weights: Vec<f64> = node.children.iter().map(|c| c.weight).collect();
        let units = sibling_weight_units(&weights);
        for (child, u) in node.children.iter().zip(units) {
            write_characteristic(out, child, &format_units(u), indent + 1);
        }
    }
    for m in &node.metrics {
        let inner = "  ".repeat(indent + 2);
        out.push_str(&format!(
            "{pad}  metric {} scale {} unit {} direction {} {{\n",
            escape(m.name()),
            m.scale(),
            escape(m.unit()),
            m.direction()
        ));
        let n = m.normalization();
        out.push_str(&format!(
            "{inner}normalize linear from {} to {}\n",
            format_number(n.from_raw),
            format_number(n.to_raw)
        ));
        if let Some(t) = m.thresholds() {
            out.push_str(&format!(
                "{inner}thresholds reject {} accept {} target {}",
                format_number(t.reject()),
                format_number(t.accept()),
                format_number(t.target())
            ));
            if let Some(r) = t.reference() {
                out.push_str(&format!(" reference {}", format_number(r)));
            }
            out.push('\n');
        }
        out.push_str(&format!("{pad}  }}\n"));
    }
    out.push_str(&format!("{pad}}}\n"));
}

/// Canonical QMDL text: fixed attribute order, two-space indentation, LF line
/// endings. Optional attributes are written only when they differ from their
/// defaults, except ruleset and aggregation which are always explicit.
pub fn serialize_qmdl(model: &QualityModel) -> String {
    let qem = model.qem();
    let mut out = String::new();
    out.push_str(&format!("model {} {{\n", escape(model.title())));
    out.push_str(&format!("  purpose: {}\n", model.purpose()));
    out.push_str(&format!("  qem_method: {}\n", qem.assessment_method));
    out.push_str(&format!("  qem_source: {}\n", qem.information_source));
    out.push_str(&format!("  organization: {}\n", model.organization()));
    out.push_str(&format!("  ruleset: {}\n", model.ruleset_ref()));
    if !model.lineage().is_empty() {
        out.push_str(&format!("  derives_from: {}\n", model.lineage().join(", ")));
    }
    if !model.context().is_empty() {
        out.push_str(&format!("  context: {}\n", escape(model.context())));
    }
    write_characteristic(&mut out, model.root(), "1", 1);
    out.push_str(&format!("  aggregation {}\n", model.aggregation()));
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{structurally_equal, tree_height};

    const MINIMAL: &str = r#"
model "tiny" {
  purpose: definition
  qem_method: short-cut
  qem_source: non-expert
  organization: hierarchical
  characteristic "quality" weight 1 { }
}
"#;

    #[test]
    fn minimal_model_with_defaults() {
        let m = parse_qmdl(MINIMAL).unwrap();
        assert_eq!(m.id(), "tiny");
        assert_eq!(m.ruleset_ref(), "default");
        assert!(m.lineage().is_empty());
        assert_eq!(m.context(), "");
        assert_eq!(m.aggregation(), AggregationOperator::WeightedArithmeticMean);
        assert_eq!(tree_height(&m), 0);
    }

    #[test]
    fn crlf_and_comments_accepted() {
        let text = MINIMAL.replace('\n', "\r\n").replace("{ }", "{ # nothing here\r\n }");
        assert!(parse_qmdl(&text).is_ok());
    }

    #[test]
    fn invalid_purpose_is_semantic_error_at_span() {
        let text = MINIMAL.replace("purpose: definition", "purpose: pred1ction");
        match parse_qmdl(&text) {
            Err(QmdlError::Semantic { span, message }) => {
                assert_eq!(span, SourceSpan { line: 3, column: 12 });
                assert!(message.contains("pred1ction"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_spans() {
        let text = MINIMAL.replace("qem_method: short-cut\n", "");
        let err = parse_qmdl(&text).unwrap_err();
        assert!(matches!(err, QmdlError::Syntax { ref expected, .. } if expected == "`qem_method`"));
        assert_eq!(err.span().line, 4);
        let err = parse_qmdl("model \"x").unwrap_err();
        assert!(matches!(err, QmdlError::Syntax { .. }));
        let err = parse_qmdl("model \"x\" { purpose: definition $").unwrap_err();
        assert_eq!(err.span(), SourceSpan { line: 1, column: 33 });
    }

    #[test]
    fn model_errors_map_to_spans() {
        let text = r#"model "m" { purpose: definition qem_method: rigorous qem_source: expert organization: hierarchical
characteristic "q" weight 1 {
  characteristic "a" weight 1 { }
  characteristic "a" weight 2 { }
} }"#;
        let err = parse_qmdl(text).unwrap_err();
        assert!(matches!(
            err,
            QmdlError::Model {
                source: ModelError::DuplicateSiblingName { .. },
                ..
            }
        ));
        assert_eq!(err.span().line, 4);
        let zero = text.replace("weight 2", "weight 0");
        let zero = zero.replace("characteristic \"a\" weight 1 { }\n", "");
        let err = parse_qmdl(&zero).unwrap_err();
        assert!(matches!(
            err,
            QmdlError::Model {
                source: ModelError::NonPositiveWeight { .. },
                ..
            }
        ));
    }

    #[test]
    fn mixed_children_and_metrics_is_syntax_error() {
        let text = r#"model "m" { purpose: assessment qem_method: rigorous qem_source: expert organization: hierarchical
characteristic "q" weight 1 {
  characteristic "a" weight 1 { }
  metric "m" scale ratio unit "" direction higher-better { normalize linear from 0 to 1 }
} }"#;
        assert!(matches!(parse_qmdl(text), Err(QmdlError::Syntax { .. })));
    }

    #[test]
    fn one_third_weights_round_trip() {
        let text = r#"model "thirds" { purpose: definition qem_method: rigorous qem_source: expert organization: hierarchical
characteristic "q" weight 1 {
  characteristic "a" weight 0.333333333 { }
  characteristic "b" weight 0.333333333 { }
  characteristic "c" weight 0.333333333 { }
} }"#;
        let m = parse_qmdl(text).unwrap();
        let sum: f64 = m.root().children.iter().map(|c| c.weight).sum();
        assert!((sum - 1.0).abs() <= 1e-9);
        for c in &m.root().children {
            assert!((c.weight - 1.0 / 3.0).abs() <= 1e-9);
        }
        let again = parse_qmdl(&serialize_qmdl(&m)).unwrap();
        assert!(structurally_equal(&m, &again, 1e-9));
    }

    #[test]
    fn serialization_is_deterministic_and_escapes() {
        let text = MINIMAL
            .replace("\"tiny\"", "\"Tiny \\\"quoted\\\" \\\\ model\"")
            .replace(
                "organization: hierarchical",
                "organization: meta-model\n derives_from: base, iso25010\n context: \"line1\\nline2\"",
            );
        let m = parse_qmdl(&text).unwrap();
        assert_eq!(m.title(), "Tiny \"quoted\" \\ model");
        assert_eq!(m.lineage(), ["base", "iso25010"]);
        let a = serialize_qmdl(&m);
        assert_eq!(a, serialize_qmdl(&m));
        let back = parse_qmdl(&a).unwrap();
        assert!(structurally_equal(&m, &back, 0.0));
        assert_eq!(serialize_qmdl(&back), a);
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(5.0), "5");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333");
        assert_eq!(format_number(-2.25), "-2.25");
        assert_eq!(format_units(250_000_000), "0.25");
        assert_eq!(format_units(1_000_000_000), "1");
    }

    #[test]
    fn sibling_units_sum_to_one() {
        let w = [1.0 / 3.0; 3];
        let u = sibling_weight_units(&w);
        assert_eq!(u.iter().sum::<u64>(), 1_000_000_000);
        assert_eq!(u, [333_333_334, 333_333_333, 333_333_333]);
    }

    #[test]
    fn excessive_nesting_is_rejected_not_overflowed() {
        let depth = 5_000;
        let mut text = String::from(
            "model \"d\" { purpose: definition qem_method: rigorous qem_source: expert organization: hierarchical\n",
        );
        text.push_str(&"characteristic \"a\" weight 1 {".repeat(depth));
        text.push_str(&"}".repeat(depth));
        text.push('}');
        assert!(matches!(parse_qmdl(&text), Err(QmdlError::Semantic { .. })));
    }
}
