//! Declarative workflow manifests.
//!
//! One TOML file per workflow:
//!
//! ```toml
//! id = "structural_relaxation"
//! task_type = "SR"
//! objective = "Relax atomic positions ..."
//! required_inputs = ["POSCAR", "POTCAR", "KPOINTS"]
//!
//! [inputs]            # role -> staged path(s) inside the working directory
//! POSCAR = "POSCAR"
//! POTCAR = ["a/POTCAR", "b/POTCAR"]
//!
//! [[steps]]
//! component = "GetLLMAnswer"
//! output_key = "incar"
//! on_error = "Abort"  # or "RecordAndContinue"; Abort is the default
//! bindings = { template = "sr_params" }
//! ```
//!
//! A binding value starting with `$` names a context key; anything else is a
//! literal (`$$` escapes a leading dollar).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::vasp::ExtractionPattern;

/// Context key holding the user's request text.
pub const REQUEST_KEY: &str = "request";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskType {
    SR,
    BS,
    AE,
    TS,
}

impl TaskType {
    pub const ALL: [TaskType; 4] = [TaskType::SR, TaskType::BS, TaskType::AE, TaskType::TS];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::SR => "SR",
            TaskType::BS => "BS",
            TaskType::AE => "AE",
            TaskType::TS => "TS",
        }
    }

    pub fn parse(s: &str) -> Option<TaskType> {
        TaskType::ALL.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    ReadFile,
    WriteFile,
    Command,
    RegexExtractor,
    GetLLMAnswer,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::ReadFile => "ReadFile",
            ComponentKind::WriteFile => "WriteFile",
            ComponentKind::Command => "Command",
            ComponentKind::RegexExtractor => "RegexExtractor",
            ComponentKind::GetLLMAnswer => "GetLLMAnswer",
        }
    }

    fn required_params(self) -> &'static [&'static str] {
        match self {
            ComponentKind::ReadFile => &["path"],
            ComponentKind::WriteFile => &["path", "content"],
            ComponentKind::Command => &["cmd"],
            ComponentKind::RegexExtractor => &["source", "patterns"],
            ComponentKind::GetLLMAnswer => &["template"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OnError {
    #[default]
    Abort,
    RecordAndContinue,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Binding {
    Key(String),
    Literal(String),
}

impl Binding {
    pub fn parse(raw: &str) -> Binding {
        if let Some(rest) = raw.strip_prefix("$$") {
            Binding::Literal(format!("${rest}"))
        } else if let Some(key) = raw.strip_prefix('$') {
            Binding::Key(key.to_string())
        } else {
            Binding::Literal(raw.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkflowStep {
    pub component: ComponentKind,
    pub bindings: BTreeMap<String, Binding>,
    pub output_key: String,
    pub on_error: OnError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkflowDef {
    pub id: String,
    pub task_type: Option<TaskType>,
    pub objective: String,
    pub required_inputs: Vec<String>,
    /// Where each input role is staged, relative to the working directory.
    pub input_paths: BTreeMap<String, Vec<String>>,
    pub steps: Vec<WorkflowStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest {source_name}: {reason}")]
    Parse { source_name: String, reason: String },
    #[error("workflow {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("duplicate workflow id {0}")]
    DuplicateId(String),
    #[error("workflow library is empty")]
    EmptyLibrary,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    component: ComponentKind,
    #[serde(default)]
    bindings: BTreeMap<String, String>,
    output_key: String,
    #[serde(default)]
    on_error: OnError,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    id: String,
    #[serde(default)]
    task_type: Option<TaskType>,
    objective: String,
    required_inputs: Vec<String>,
    #[serde(default)]
    inputs: BTreeMap<String, OneOrMany>,
    steps: Vec<RawStep>,
}

/// Commands the engine will run; anything else is rejected.
pub const ALLOWED_COMMANDS: [&str; 5] = ["run_backend", "neb_interpolate", "noop", "band_gap", "nebef"];

impl WorkflowDef {
    pub fn from_toml(text: &str, source_name: &str) -> Result<Self, ManifestError> {
        let raw: RawManifest =
            toml::from_str(text).map_err(|e| ManifestError::Parse { source_name: source_name.into(), reason: e.to_string() })?;
        let input_paths = raw
            .required_inputs
            .iter()
            .map(|role| {
                let paths = match raw.inputs.get(role) {
                    Some(OneOrMany::One(p)) => vec![p.clone()],
                    Some(OneOrMany::Many(ps)) => ps.clone(),
                    None => vec![role.clone()],
                };
                (role.clone(), paths)
            })
            .collect();
        let def = WorkflowDef {
            id: raw.id,
            task_type: raw.task_type,
            objective: raw.objective.trim().to_string(),
            required_inputs: raw.required_inputs,
            input_paths,
            steps: raw
                .steps
                .into_iter()
                .map(|s| WorkflowStep {
                    component: s.component,
                    bindings: s.bindings.iter().map(|(k, v)| (k.clone(), Binding::parse(v))).collect(),
                    output_key: s.output_key,
                    on_error: s.on_error,
                })
                .collect(),
        };
        for role in raw.inputs.keys() {
            if !def.required_inputs.contains(role) {
                return Err(def.invalid(&format!("[inputs] names {role}, which is not a required input")));
            }
        }
        def.validate()?;
        Ok(def)
    }

    fn invalid(&self, reason: &str) -> ManifestError {
        ManifestError::Invalid { id: self.id.clone(), reason: reason.into() }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.id.trim().is_empty() || self.id.contains(char::is_whitespace) {
            return Err(self.invalid("id must be a single non-empty word"));
        }
        if self.steps.is_empty() {
            return Err(self.invalid("step list is empty"));
        }
        let mut known: BTreeSet<&str> = self.required_inputs.iter().map(String::as_str).collect();
        known.insert(REQUEST_KEY);
        if known.len() != self.required_inputs.len() + 1 {
            return Err(self.invalid("required inputs must be distinct and must not shadow the request key"));
        }
        for (i, step) in self.steps.iter().enumerate() {
            let at = |reason: String| self.invalid(&format!("step {}: {reason}", i + 1));
            for p in step.component.required_params() {
                if !step.bindings.contains_key(*p) {
                    return Err(at(format!("{} needs a `{p}` binding", step.component.as_str())));
                }
            }
            for (name, b) in &step.bindings {
                if let Binding::Key(k) = b {
                    if !known.contains(k.as_str()) {
                        return Err(at(format!("binding {name} references {k}, which is neither an input nor an earlier output")));
                    }
                }
            }
            match (step.component, step.bindings.get("cmd"), step.bindings.get("patterns"), step.bindings.get("template")) {
                (ComponentKind::Command, Some(Binding::Literal(c)), _, _) if !ALLOWED_COMMANDS.contains(&c.as_str()) => {
                    return Err(at(format!("command {c} is not in the allow-list")))
                }
                (ComponentKind::Command, Some(Binding::Key(_)), _, _) => return Err(at("the command name must be a literal".into())),
                (ComponentKind::RegexExtractor, _, Some(Binding::Literal(p)), _) => {
                    parse_pattern_list(p).map_err(at)?;
                }
                (ComponentKind::RegexExtractor, _, Some(Binding::Key(_)), _) => return Err(at("patterns must be a literal list".into())),
                (ComponentKind::GetLLMAnswer, _, _, Some(Binding::Key(_))) => return Err(at("the template id must be a literal".into())),
                _ => {}
            }
            if !known.insert(step.output_key.as_str()) {
                return Err(at(format!("output key {} is already used", step.output_key)));
            }
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }
}

/// Comma-separated standard pattern names, `?` marking optional ones.
pub fn parse_pattern_list(spec: &str) -> Result<Vec<ExtractionPattern>, String> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| ExtractionPattern::standard(s).ok_or_else(|| format!("unknown extraction pattern {s}")))
        .collect()
}

/// The ordered set of workflows selection chooses from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkflowLibrary {
    pub workflows: Vec<WorkflowDef>,
}

const BUILTIN: [(&str, &str); 4] = [
    ("structural_relaxation.toml", include_str!("../../assets/workflows/structural_relaxation.toml")),
    ("band_structure.toml", include_str!("../../assets/workflows/band_structure.toml")),
    ("adsorption_energy.toml", include_str!("../../assets/workflows/adsorption_energy.toml")),
    ("transition_state.toml", include_str!("../../assets/workflows/transition_state.toml")),
];

impl WorkflowLibrary {
    pub fn new(workflows: Vec<WorkflowDef>) -> Result<Self, ManifestError> {
        if workflows.is_empty() {
            return Err(ManifestError::EmptyLibrary);
        }
        let mut seen = BTreeSet::new();
        for w in &workflows {
            if !seen.insert(w.id.as_str()) {
                return Err(ManifestError::DuplicateId(w.id.clone()));
            }
        }
        Ok(WorkflowLibrary { workflows })
    }

    pub fn builtin() -> Self {
        let defs = BUILTIN.iter().map(|(name, text)| WorkflowDef::from_toml(text, name).expect("bundled workflow is valid")).collect();
        Self::new(defs).expect("bundled workflow ids are distinct")
    }

    /// Every `*.toml` in `dir`, in file-name order.
    pub fn from_dir(dir: &Path) -> Result<Self, ManifestError> {
        let io = |e: std::io::Error| ManifestError::Parse { source_name: dir.display().to_string(), reason: e.to_string() };
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        let mut defs = Vec::new();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(io)?;
            defs.push(WorkflowDef::from_toml(&text, &f.display().to_string())?);
        }
        Self::new(defs)
    }

    pub fn get(&self, id: &str) -> Option<&WorkflowDef> {
        self.workflows.iter().find(|w| w.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.workflows.iter().map(|w| w.id.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
id = "mini"
objective = "Write then run."
required_inputs = ["POSCAR"]

[[steps]]
component = "WriteFile"
output_key = "written"
bindings = { path = "copy/POSCAR", content = "$POSCAR" }

[[steps]]
component = "Command"
output_key = "ran"
on_error = "RecordAndContinue"
bindings = { cmd = "noop" }
"#;

    #[test]
    fn parses_minimal_manifest() {
        let w = WorkflowDef::from_toml(MINI, "mini.toml").unwrap();
        assert_eq!(w.steps.len(), 2);
        assert_eq!(w.steps[0].bindings["content"], Binding::Key("POSCAR".into()));
        assert_eq!(w.steps[1].on_error, OnError::RecordAndContinue);
        assert_eq!(w.input_paths["POSCAR"], vec!["POSCAR".to_string()]);
    }

    #[test]
    fn binding_escapes() {
        assert_eq!(Binding::parse("$x"), Binding::Key("x".into()));
        assert_eq!(Binding::parse("$$5"), Binding::Literal("$5".into()));
        assert_eq!(Binding::parse("5"), Binding::Literal("5".into()));
    }

    #[test]
    fn rejects_forward_references_and_duplicates() {
        let fwd = MINI.replace("$POSCAR", "$ran");
        assert!(matches!(WorkflowDef::from_toml(&fwd, "x"), Err(ManifestError::Invalid { .. })));
        let dup = MINI.replace("output_key = \"ran\"", "output_key = \"written\"");
        assert!(matches!(WorkflowDef::from_toml(&dup, "x"), Err(ManifestError::Invalid { .. })));
        let shell = MINI.replace("cmd = \"noop\"", "cmd = \"rm -rf /\"");
        assert!(matches!(WorkflowDef::from_toml(&shell, "x"), Err(ManifestError::Invalid { .. })));
        let empty = "id = \"e\"\nobjective = \"x\"\nrequired_inputs = []\nsteps = []\n";
        assert!(matches!(WorkflowDef::from_toml(empty, "x"), Err(ManifestError::Invalid { .. })));
    }

    #[test]
    fn builtin_library_has_four_workflows() {
        let lib = WorkflowLibrary::builtin();
        assert_eq!(lib.ids(), vec!["structural_relaxation", "band_structure", "adsorption_energy", "transition_state"]);
        let tasks: Vec<_> = lib.workflows.iter().map(|w| w.task_type.unwrap()).collect();
        assert_eq!(tasks, TaskType::ALL.to_vec());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let w = WorkflowDef::from_toml(MINI, "mini.toml").unwrap();
        assert_eq!(WorkflowLibrary::new(vec![w.clone(), w]), Err(ManifestError::DuplicateId("mini".into())));
        assert_eq!(WorkflowLibrary::new(vec![]), Err(ManifestError::EmptyLibrary));
    }
}
