//! INCAR documents: ordered `TAG = value` entries with lexically typed values.
//!
//! Typing never consults a tag schema, so unknown tags parse fine and are left
//! for deck validation to flag.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TagValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    IntList(Vec<i64>),
    RealList(Vec<f64>),
    Text(String),
}

impl TagValue {
    /// Numeric view of scalar values (Int widens to Real).
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            TagValue::Int(i) => Some(*i as f64),
            TagValue::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            TagValue::Int(i) => Some(*i),
            TagValue::Real(r) if r.fract() == 0.0 && r.abs() < 9e15 => Some(*r as i64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            TagValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            TagValue::Bool(_) => ValueKind::Bool,
            TagValue::Int(_) => ValueKind::Int,
            TagValue::Real(_) => ValueKind::Real,
            TagValue::IntList(_) => ValueKind::IntList,
            TagValue::RealList(_) => ValueKind::RealList,
            TagValue::Text(_) => ValueKind::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    Bool,
    Int,
    Real,
    IntList,
    RealList,
    Text,
}

/// Real literals always carry a '.' or an exponent so they never re-lex as Int.
fn fmt_real(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) || !v.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

impl fmt::Display for TagValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagValue::Bool(true) => f.write_str(".TRUE."),
            TagValue::Bool(false) => f.write_str(".FALSE."),
            TagValue::Int(i) => write!(f, "{i}"),
            TagValue::Real(r) => f.write_str(&fmt_real(*r)),
            TagValue::IntList(v) => {
                let parts: Vec<String> = v.iter().map(|i| i.to_string()).collect();
                f.write_str(&parts.join(" "))
            }
            TagValue::RealList(v) => {
                let parts: Vec<String> = v.iter().map(|r| fmt_real(*r)).collect();
                f.write_str(&parts.join(" "))
            }
            TagValue::Text(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Num {
    Int(i64),
    Real(f64),
}

fn lex_number(tok: &str) -> Option<Num> {
    let body = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    if body.is_empty() {
        return None;
    }
    if body.bytes().all(|b| b.is_ascii_digit()) {
        return match tok.parse::<i64>() {
            Ok(i) => Some(Num::Int(i)),
            Err(_) => tok.parse::<f64>().ok().filter(|v| v.is_finite()).map(Num::Real),
        };
    }
    // mantissa digits with at most one '.', then an optional e/E/d/D exponent
    let (mantissa, exponent) = match body.find(['e', 'E', 'd', 'D']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let dots = mantissa.bytes().filter(|&b| b == b'.').count();
    let digits = mantissa.bytes().filter(|b| b.is_ascii_digit()).count();
    if dots > 1 || digits == 0 || mantissa.bytes().any(|b| !(b.is_ascii_digit() || b == b'.')) {
        return None;
    }
    if let Some(e) = exponent {
        let e_body = e.strip_prefix(['+', '-']).unwrap_or(e);
        if e_body.is_empty() || !e_body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    } else if dots == 0 {
        return None;
    }
    let normalized = tok.replace(['d', 'D'], "e");
    normalized.parse::<f64>().ok().filter(|v| v.is_finite()).map(Num::Real)
}

/// `N*x` repeat syntax as used by MAGMOM and friends.
fn lex_repeat(tok: &str) -> Option<Vec<Num>> {
    let (n, x) = tok.split_once('*')?;
    let n: usize = n.parse().ok().filter(|&n| n > 0 && n <= 100_000)?;
    let x = lex_number(x)?;
    Some(vec![x; n])
}

/// Lexical typing of a raw (comment-free, trimmed) value string.
pub fn lex_value(raw: &str) -> TagValue {
    let upper = raw.to_ascii_uppercase();
    match upper.as_str() {
        ".TRUE." | ".T." => return TagValue::Bool(true),
        ".FALSE." | ".F." => return TagValue::Bool(false),
        _ => {}
    }
    let toks: Vec<&str> = raw.split_whitespace().collect();
    let mut nums = Vec::new();
    let mut repeated = false;
    for t in &toks {
        if let Some(n) = lex_number(t) {
            nums.push(n);
        } else if let Some(r) = lex_repeat(t) {
            repeated = true;
            nums.extend(r);
        } else {
            return TagValue::Text(raw.to_string());
        }
    }
    if toks.len() == 1 && !repeated {
        return match nums[0] {
            Num::Int(i) => TagValue::Int(i),
            Num::Real(r) => TagValue::Real(r),
        };
    }
    if nums.iter().all(|n| matches!(n, Num::Int(_))) {
        TagValue::IntList(nums.iter().map(|n| if let Num::Int(i) = n { *i } else { 0 }).collect())
    } else {
        TagValue::RealList(
            nums.iter()
                .map(|n| match n {
                    Num::Int(i) => *i as f64,
                    Num::Real(r) => *r,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncarEntry {
    pub tag: String,
    pub value: TagValue,
    /// 1-based line in the source text; 0 for programmatically added entries.
    pub source_line: usize,
}

/// Equality ignores `source_line`, which is diagnostic only.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IncarDocument {
    pub entries: Vec<IncarEntry>,
}

impl PartialEq for IncarDocument {
    fn eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| a.tag == b.tag && a.value == b.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IncarError {
    #[error("line {line}: duplicate tag {tag} (first set on line {first_line})")]
    DuplicateTag { tag: String, line: usize, first_line: usize },
    #[error("line {line}: malformed statement {text:?}")]
    MalformedLine { line: usize, text: String },
}

fn valid_tag(tag: &str) -> bool {
    let mut chars = tag.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl IncarDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, tag: &str) -> Option<&TagValue> {
        let tag = tag.to_ascii_uppercase();
        self.entries.iter().find(|e| e.tag == tag).map(|e| &e.value)
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.get(tag).is_some()
    }

    pub fn get_f64(&self, tag: &str) -> Option<f64> {
        self.get(tag).and_then(TagValue::as_f64)
    }

    pub fn get_i64(&self, tag: &str) -> Option<i64> {
        self.get(tag).and_then(TagValue::as_i64)
    }

    pub fn get_bool(&self, tag: &str) -> Option<bool> {
        self.get(tag).and_then(TagValue::as_bool)
    }

    /// Insert or replace, keeping the original position of an existing tag.
    pub fn set(&mut self, tag: &str, value: TagValue) {
        let tag = tag.to_ascii_uppercase();
        match self.entries.iter_mut().find(|e| e.tag == tag) {
            Some(e) => e.value = value,
            None => self.entries.push(IncarEntry { tag, value, source_line: 0 }),
        }
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.tag.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse INCAR text. `#` and `!` start comments; `;` separates statements on one line.
pub fn parse_incar(text: &str) -> Result<IncarDocument, IncarError> {
    let mut doc = IncarDocument::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = match raw_line.find(['#', '!']) {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        for stmt in content.split(';') {
            let stmt = stmt.trim();
            if stmt.is_empty() {
                continue;
            }
            let malformed = || IncarError::MalformedLine { line: line_no, text: stmt.to_string() };
            let (tag, value) = stmt.split_once('=').ok_or_else(malformed)?;
            let tag = tag.trim();
            let value = value.trim();
            if !valid_tag(tag) || value.is_empty() {
                return Err(malformed());
            }
            let tag = tag.to_ascii_uppercase();
            if let Some(first) = doc.entries.iter().find(|e| e.tag == tag) {
                return Err(IncarError::DuplicateTag { tag, line: line_no, first_line: first.source_line });
            }
            doc.entries.push(IncarEntry { tag, value: lex_value(value), source_line: line_no });
        }
    }
    Ok(doc)
}

pub fn write_incar(doc: &IncarDocument) -> String {
    let mut out = String::new();
    for e in &doc.entries {
        out.push_str(&e.tag);
        out.push_str(" = ");
        out.push_str(&e.value.to_string());
        out.push('\n');
    }
    out
}
