//! Deck validation against a data-driven tag registry plus a few cross-tag rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::vasp::structure::Mat3;
use crate::vasp::{IncarDocument, TagValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagKind {
    Bool,
    Int,
    Real,
    Text,
    IntList,
    RealList,
    Any,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum Allowed {
    Ints(Vec<i64>),
    Texts(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TagSpec {
    pub kind: TagKind,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub positive: bool,
    #[serde(default)]
    allowed: Option<Allowed>,
}

/// Built-in predicates a registry may enable by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    UnknownTag,
    TagKind,
    TagRange,
    IbrionPotim,
    NebCellConsistency,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::UnknownTag, Rule::TagKind, Rule::TagRange, Rule::IbrionPotim, Rule::NebCellConsistency];

    pub fn id(self) -> &'static str {
        match self {
            Rule::UnknownTag => "unknown_tag",
            Rule::TagKind => "tag_kind",
            Rule::TagRange => "tag_range",
            Rule::IbrionPotim => "ibrion_potim",
            Rule::NebCellConsistency => "neb_cell_consistency",
        }
    }

    pub fn from_id(id: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.id() == id)
    }

    /// Tags the predicate inspects; each must be present in the registry.
    pub fn referenced_tags(self) -> &'static [&'static str] {
        match self {
            Rule::UnknownTag | Rule::TagKind | Rule::TagRange => &[],
            Rule::IbrionPotim => &["IBRION", "POTIM", "NSW"],
            Rule::NebCellConsistency => &["IMAGES", "ISIF"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("registry file: {0}")]
    Parse(String),
    #[error("unknown rule id {0:?}")]
    UnknownRule(String),
    #[error("rule {rule} references tag {tag}, which the registry does not define")]
    RuleReferencesUnknownTag { rule: String, tag: String },
}

#[derive(Debug, Deserialize)]
struct RegistryFile {
    rules: Vec<String>,
    tags: BTreeMap<String, TagSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagRegistry {
    pub tags: BTreeMap<String, TagSpec>,
    pub rules: Vec<Rule>,
}

impl TagRegistry {
    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        let tags: BTreeMap<String, TagSpec> = file.tags.into_iter().map(|(k, v)| (k.to_ascii_uppercase(), v)).collect();
        let mut rules = Vec::new();
        for id in &file.rules {
            let rule = Rule::from_id(id).ok_or_else(|| RegistryError::UnknownRule(id.clone()))?;
            for tag in rule.referenced_tags() {
                if !tags.contains_key(*tag) {
                    return Err(RegistryError::RuleReferencesUnknownTag { rule: id.clone(), tag: tag.to_string() });
                }
            }
            rules.push(rule);
        }
        rules.sort();
        rules.dedup();
        Ok(TagRegistry { tags, rules })
    }

    pub fn builtin() -> Self {
        Self::from_toml(include_str!("../../assets/tag_registry.toml")).expect("bundled registry is valid")
    }

    pub fn knows(&self, tag: &str) -> bool {
        self.tags.contains_key(&tag.to_ascii_uppercase())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    pub tag: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Sorted, so the report does not depend on INCAR tag order.
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rule_ids(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.rule_id.as_str()).collect()
    }
}

/// Facts from earlier steps that some rules need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrossStepContext {
    /// ISIF used to relax each NEB endpoint, keyed by a label.
    pub endpoint_isif: Vec<(String, i64)>,
    /// Scaled lattices of the NEB endpoints.
    pub endpoint_lattices: Vec<(String, Mat3)>,
}

const LATTICE_TOL: f64 = 1e-8;

fn kind_ok(kind: TagKind, v: &TagValue) -> bool {
    matches!(
        (kind, v),
        (TagKind::Any, _)
            | (TagKind::Bool, TagValue::Bool(_))
            | (TagKind::Int, TagValue::Int(_))
            | (TagKind::Real, TagValue::Int(_) | TagValue::Real(_))
            | (TagKind::Text, TagValue::Text(_))
            | (TagKind::IntList, TagValue::Int(_) | TagValue::IntList(_))
            | (TagKind::RealList, TagValue::Int(_) | TagValue::Real(_) | TagValue::IntList(_) | TagValue::RealList(_))
    )
}

fn range_problem(spec: &TagSpec, v: &TagValue) -> Option<String> {
    if let Some(allowed) = &spec.allowed {
        match (allowed, v) {
            (Allowed::Ints(a), TagValue::Int(i)) if !a.contains(i) => return Some(format!("{i} is not one of {a:?}")),
            (Allowed::Texts(a), TagValue::Text(t)) if !a.iter().any(|x| x.eq_ignore_ascii_case(t.trim())) => {
                return Some(format!("{t:?} is not one of {a:?}"))
            }
            _ => {}
        }
    }
    let x = v.as_f64()?;
    if spec.positive && x <= 0.0 {
        return Some(format!("{x} must be positive"));
    }
    if let Some(lo) = spec.min.filter(|&lo| x < lo) {
        return Some(format!("{x} is below the minimum {lo}"));
    }
    if let Some(hi) = spec.max.filter(|&hi| x > hi) {
        return Some(format!("{x} exceeds the maximum {hi}"));
    }
    None
}

/// VASP's IBRION default: -1 for static runs (NSW 0 or 1), else 0.
pub fn effective_ibrion(incar: &IncarDocument) -> i64 {
    incar.get_i64("IBRION").unwrap_or_else(|| if incar.get_i64("NSW").unwrap_or(0) <= 1 { -1 } else { 0 })
}

pub fn validate_deck(incar: &IncarDocument, registry: &TagRegistry, cross: &CrossStepContext) -> ValidationReport {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, rule: Rule, tag: Option<&str>, message: String| {
        out.push(Violation { rule_id: rule.id().to_string(), tag: tag.map(str::to_string), message })
    };
    let enabled = |r: Rule| registry.rules.contains(&r);

    for e in &incar.entries {
        match registry.tags.get(&e.tag) {
            None => {
                if enabled(Rule::UnknownTag) {
                    push(&mut out, Rule::UnknownTag, Some(&e.tag), format!("{} is not a recognised INCAR tag", e.tag));
                }
            }
            Some(spec) => {
                if !kind_ok(spec.kind, &e.value) {
                    if enabled(Rule::TagKind) {
                        push(
                            &mut out,
                            Rule::TagKind,
                            Some(&e.tag),
                            format!("{} expects a {:?} value, got {:?}", e.tag, spec.kind, e.value.kind()),
                        );
                    }
                } else if enabled(Rule::TagRange) {
                    if let Some(p) = range_problem(spec, &e.value) {
                        push(&mut out, Rule::TagRange, Some(&e.tag), format!("{}: {p}", e.tag));
                    }
                }
            }
        }
    }

    if enabled(Rule::IbrionPotim) {
        let ibrion = effective_ibrion(incar);
        let has_potim = incar.contains("POTIM");
        if (0..=3).contains(&ibrion) && !has_potim {
            push(&mut out, Rule::IbrionPotim, Some("POTIM"), format!("IBRION = {ibrion} needs POTIM"));
        }
        if ibrion == -1 && has_potim {
            push(&mut out, Rule::IbrionPotim, Some("POTIM"), "POTIM has no meaning for a static run (IBRION = -1)".into());
        }
    }

    if enabled(Rule::NebCellConsistency) && incar.contains("IMAGES") {
        for (label, isif) in &cross.endpoint_isif {
            if *isif >= 3 {
                push(
                    &mut out,
                    Rule::NebCellConsistency,
                    Some("ISIF"),
                    format!("endpoint {label} was relaxed with ISIF = {isif}, which changes the cell"),
                );
            }
        }
        if let Some((first_label, first)) = cross.endpoint_lattices.first() {
            for (label, lat) in &cross.endpoint_lattices[1..] {
                let differs = (0..3).any(|i| (0..3).any(|j| (lat[i][j] - first[i][j]).abs() > LATTICE_TOL));
                if differs {
                    push(&mut out, Rule::NebCellConsistency, None, format!("endpoint cells {first_label} and {label} differ"));
                }
            }
        }
    }

    out.sort();
    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vasp::parse_incar;

    fn check(text: &str) -> ValidationReport {
        validate_deck(&parse_incar(text).unwrap(), &TagRegistry::builtin(), &CrossStepContext::default())
    }

    #[test]
    fn builtin_registry_is_broad() {
        let r = TagRegistry::builtin();
        assert!(r.tags.len() >= 40);
        assert_eq!(r.rules.len(), Rule::ALL.len());
    }

    #[test]
    fn golden_relaxation_passes() {
        let r = check("ENCUT = 450\nIBRION = 2\nNSW = 100\nPOTIM = 0.5\nEDIFFG = -0.02\nISIF = 2\nPREC = Accurate");
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn unknown_tag_names_the_tag() {
        let r = check("ENCUT = 450\nFOOBAR = 1\n");
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule_id, "unknown_tag");
        assert_eq!(r.violations[0].tag.as_deref(), Some("FOOBAR"));
    }

    #[test]
    fn ibrion_potim_rule() {
        assert_eq!(check("IBRION = 2\nNSW = 50\n").rule_ids(), vec!["ibrion_potim"]);
        assert_eq!(check("IBRION = -1\nNSW = 0\nPOTIM = 0.5\n").rule_ids(), vec!["ibrion_potim"]);
        assert!(check("NSW = 0\n").passed());
        // NSW > 1 without IBRION means MD, which also needs POTIM
        assert_eq!(check("NSW = 10\n").rule_ids(), vec!["ibrion_potim"]);
    }

    #[test]
    fn kinds_and_ranges() {
        assert_eq!(check("LHFCALC = 1\n").rule_ids(), vec!["tag_kind"]);
        assert_eq!(check("ISIF = 9\n").rule_ids(), vec!["tag_range"]);
        assert_eq!(check("PREC = sloppy\n").rule_ids(), vec!["tag_range"]);
        assert!(check("PREC = accurate\nENCUT = 400\nAEXX = 0.25\n").passed());
        assert_eq!(check("ENCUT = -1\n").rule_ids(), vec!["tag_range"]);
    }

    #[test]
    fn neb_endpoint_isif() {
        let incar = parse_incar("IMAGES = 3\nIBRION = 3\nPOTIM = 0.1\nNSW = 100\n").unwrap();
        let reg = TagRegistry::builtin();
        let ok = CrossStepContext { endpoint_isif: vec![("initial".into(), 2), ("final".into(), 2)], ..Default::default() };
        assert!(validate_deck(&incar, &reg, &ok).passed());
        let bad = CrossStepContext { endpoint_isif: vec![("initial".into(), 3), ("final".into(), 2)], ..Default::default() };
        assert_eq!(validate_deck(&incar, &reg, &bad).rule_ids(), vec!["neb_cell_consistency"]);
        let l1 = [[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]];
        let mut l2 = l1;
        l2[0][0] = 5.01;
        let cells = CrossStepContext { endpoint_lattices: vec![("initial".into(), l1), ("final".into(), l2)], ..Default::default() };
        assert_eq!(validate_deck(&incar, &reg, &cells).rule_ids(), vec!["neb_cell_consistency"]);
    }

    #[test]
    fn rule_referencing_unknown_tag_is_rejected() {
        let text = "rules = [\"ibrion_potim\"]\n[tags]\nIBRION = { kind = \"int\" }\n";
        assert!(matches!(TagRegistry::from_toml(text), Err(RegistryError::RuleReferencesUnknownTag { .. })));
        assert!(matches!(TagRegistry::from_toml("rules = [\"nope\"]\n[tags]\n"), Err(RegistryError::UnknownRule(_))));
    }
}
