//! Layered prompt templates and fenced-answer extraction.
//!
//! A template is four fixed layers rendered in order: domain background, task
//! instructions, current state, format constraint. Bodies reference context
//! values through `{slot}` markers.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::vasp::{CaptureType, ExtractionPattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerName {
    DomainBackground,
    TaskInstructions,
    CurrentState,
    FormatConstraint,
}

impl LayerName {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerName::DomainBackground => "domain_background",
            LayerName::TaskInstructions => "task_instructions",
            LayerName::CurrentState => "current_state",
            LayerName::FormatConstraint => "format_constraint",
        }
    }

    fn heading(self) -> &'static str {
        match self {
            LayerName::DomainBackground => "## Domain background",
            LayerName::TaskInstructions => "## Task instructions",
            LayerName::CurrentState => "## Current state",
            LayerName::FormatConstraint => "## Output format",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLayer {
    pub name: LayerName,
    pub body: String,
}

/// How a validated answer is interpreted after extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    #[default]
    Incar,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub layers: Vec<PromptLayer>,
    #[serde(default = "fenced_block_extractor")]
    pub answer_extractor: ExtractionPattern,
    #[serde(default)]
    pub answer_kind: AnswerKind,
}

/// First fenced block; an optional language tag on the opening fence is dropped.
pub fn fenced_block_extractor() -> ExtractionPattern {
    ExtractionPattern::new("fenced_block", r"(?s)```(?:[A-Za-z0-9_+\-]*[ \t]*\n)?(.*?)```", CaptureType::Text)
}

/// Inverse of the default extractor for content without a fence delimiter.
pub fn wrap_in_fence(content: &str) -> String {
    format!("```\n{content}\n```")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unresolved slot {{{slot}}} in layer {layer}")]
    UnresolvedSlot { slot: String, layer: String },
    #[error("template {id}: {reason}")]
    InvalidTemplate { id: String, reason: String },
    #[error("answer does not match the expected format: {0}")]
    FormatViolation(String),
}

/// Anything that can resolve a slot name to text.
pub trait SlotSource {
    fn resolve_slot(&self, name: &str) -> Option<String>;
}

impl SlotSource for BTreeMap<String, String> {
    fn resolve_slot(&self, name: &str) -> Option<String> {
        self.get(name).cloned()
    }
}

fn slot_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_.]*)\}").expect("static regex"))
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |reason: &str| PromptError::InvalidTemplate { id: self.id.clone(), reason: reason.into() };
        if self.layers.last().map(|l| l.name) != Some(LayerName::FormatConstraint) {
            return Err(invalid("format_constraint layer must be present and last"));
        }
        if self.layers.windows(2).any(|w| w[0].name >= w[1].name) {
            return Err(invalid("layers must appear once each, in hierarchy order"));
        }
        Regex::new(&self.answer_extractor.pattern).map_err(|e| invalid(&format!("bad answer extractor: {e}")))?;
        Ok(())
    }

    /// Slot names in first-use order, each listed once.
    pub fn slots(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for layer in &self.layers {
            for c in slot_regex().captures_iter(&layer.body) {
                let name = c[1].to_string();
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }

    pub fn layer(&self, name: LayerName) -> Option<&PromptLayer> {
        self.layers.iter().find(|l| l.name == name)
    }
}

/// Render all layers with delimiting headings, substituting slots literally.
pub fn render_prompt(tpl: &PromptTemplate, ctx: &dyn SlotSource) -> Result<String, PromptError> {
    let mut out = String::new();
    for layer in &tpl.layers {
        let mut body = String::with_capacity(layer.body.len());
        let mut last = 0;
        for c in slot_regex().captures_iter(&layer.body) {
            let m = c.get(0).expect("whole match");
            let name = &c[1];
            let value = ctx
                .resolve_slot(name)
                .ok_or_else(|| PromptError::UnresolvedSlot { slot: name.to_string(), layer: layer.name.as_str().to_string() })?;
            body.push_str(&layer.body[last..m.start()]);
            body.push_str(&value);
            last = m.end();
        }
        body.push_str(&layer.body[last..]);
        if !out.is_empty() {
            out.push_str("\n\n");
        }
        out.push_str(layer.name.heading());
        out.push('\n');
        out.push_str(body.trim_end());
    }
    out.push('\n');
    Ok(out)
}

/// Apply the template's extractor and return the first matching block.
pub fn extract_answer(text: &str, tpl: &PromptTemplate) -> Result<String, PromptError> {
    let re = Regex::new(&tpl.answer_extractor.pattern)
        .map_err(|e| PromptError::InvalidTemplate { id: tpl.id.clone(), reason: e.to_string() })?;
    let caps = re
        .captures(text)
        .ok_or_else(|| PromptError::FormatViolation(format!("no block matching {} in the answer", tpl.answer_extractor.name)))?;
    let m = caps.get(1).or_else(|| caps.get(0)).expect("whole match");
    let s = m.as_str();
    Ok(s.strip_suffix('\n').unwrap_or(s).to_string())
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    #[serde(rename = "template")]
    templates: Vec<PromptTemplate>,
}

/// Templates keyed by id, loaded from a TOML file of `[[template]]` tables.
#[derive(Debug, Clone, Default)]
pub struct TemplateLibrary {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateLibrary {
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let file: TemplateFile =
            toml::from_str(text).map_err(|e| PromptError::InvalidTemplate { id: "<file>".into(), reason: e.to_string() })?;
        let mut lib = TemplateLibrary::default();
        for t in file.templates {
            lib.insert(t)?;
        }
        Ok(lib)
    }

    /// Templates shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml(include_str!("../../assets/templates.toml")).expect("bundled templates are valid")
    }

    pub fn insert(&mut self, t: PromptTemplate) -> Result<(), PromptError> {
        t.validate()?;
        if self.templates.contains_key(&t.id) {
            return Err(PromptError::InvalidTemplate { id: t.id, reason: "duplicate template id".into() });
        }
        self.templates.insert(t.id.clone(), t);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tpl(layers: Vec<(LayerName, &str)>) -> PromptTemplate {
        PromptTemplate {
            id: "t".into(),
            layers: layers.into_iter().map(|(name, body)| PromptLayer { name, body: body.into() }).collect(),
            answer_extractor: fenced_block_extractor(),
            answer_kind: AnswerKind::Incar,
        }
    }

    #[test]
    fn zero_slots_verbatim() {
        let t = tpl(vec![(LayerName::DomainBackground, "VASP is a DFT code."), (LayerName::FormatConstraint, "Answer in a fenced block.")]);
        let out = render_prompt(&t, &BTreeMap::new()).unwrap();
        let a = out.find("VASP is a DFT code.").unwrap();
        let b = out.find("Answer in a fenced block.").unwrap();
        assert!(a < b);
    }

    #[test]
    fn slot_substitution() {
        let t = tpl(vec![(LayerName::TaskInstructions, "Relax {material} now."), (LayerName::FormatConstraint, "x")]);
        let ctx: BTreeMap<String, String> = [("material".to_string(), "Si".to_string())].into();
        let out = render_prompt(&t, &ctx).unwrap();
        assert!(out.contains("Relax Si now."));
    }

    #[test]
    fn unresolved_slot() {
        let t = tpl(vec![(LayerName::CurrentState, "E = {prev_energy}"), (LayerName::FormatConstraint, "x")]);
        assert_eq!(
            render_prompt(&t, &BTreeMap::new()),
            Err(PromptError::UnresolvedSlot { slot: "prev_energy".into(), layer: "current_state".into() })
        );
    }

    #[test]
    fn layer_order_enforced() {
        assert!(tpl(vec![(LayerName::TaskInstructions, "a")]).validate().is_err());
        assert!(tpl(vec![(LayerName::FormatConstraint, "a"), (LayerName::TaskInstructions, "b")]).validate().is_err());
        assert!(tpl(vec![(LayerName::TaskInstructions, "a"), (LayerName::TaskInstructions, "b"), (LayerName::FormatConstraint, "c")])
            .validate()
            .is_err());
        assert!(tpl(vec![(LayerName::CurrentState, "a"), (LayerName::FormatConstraint, "c")]).validate().is_ok());
    }

    #[test]
    fn answer_extraction() {
        let t = tpl(vec![(LayerName::FormatConstraint, "x")]);
        let text = "Here are the settings:\n```INCAR\nENCUT = 450\nIBRION = 2\n```\nGood luck.";
        assert_eq!(extract_answer(text, &t).unwrap(), "ENCUT = 450\nIBRION = 2");
        let two = "```\nA = 1\n```\nor\n```\nA = 2\n```";
        assert_eq!(extract_answer(two, &t).unwrap(), "A = 1");
        assert_eq!(extract_answer("```ENCUT = 450```", &t).unwrap(), "ENCUT = 450");
        assert!(matches!(extract_answer("just prose", &t), Err(PromptError::FormatViolation(_))));
    }

    #[test]
    fn builtin_library_loads() {
        let lib = TemplateLibrary::builtin();
        for id in ["select_workflow", "sr_params", "bs_params", "ae_params", "ts_relax_params", "ts_neb_params", "no_agent"] {
            assert!(lib.get(id).is_some(), "missing template {id}");
        }
    }
}
