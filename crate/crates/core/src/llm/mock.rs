//! Scripted offline LLM.
//!
//! Script files map `(template_id, invocation_index)` to canned answers:
//!
//! ~~~text
//! # free-form comments before the first header
//! === sr_params 0
//! ```INCAR
//! ENCUT = 450
//! ```
//! === sr_params *        <- any invocation without an exact entry
//! ...
//! === default            <- any template at all
//! ...
//! ~~~
//!
//! A body runs until the next `=== ` header; trailing blank lines are dropped.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use super::{LlmClient, LlmError, LlmRequest, LlmResponse};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockScript {
    pub entries: BTreeMap<(String, usize), String>,
    pub any_index: BTreeMap<String, String>,
    pub default_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MockScriptError {
    #[error("line {line}: malformed header {text:?}")]
    BadHeader { line: usize, text: String },
    #[error("line {line}: duplicate entry for {key}")]
    Duplicate { line: usize, key: String },
}

enum Key {
    Exact(String, usize),
    Any(String),
    Default,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, MockScriptError> {
        let mut script = MockScript::default();
        let mut current: Option<(Key, usize, Vec<&str>)> = None;
        for (i, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix("=== ") {
                if let Some(done) = current.take() {
                    script.commit(done)?;
                }
                let toks: Vec<&str> = rest.split_whitespace().collect();
                let key = match toks.as_slice() {
                    ["default"] => Key::Default,
                    [id, "*"] => Key::Any(id.to_string()),
                    [id, idx] => match idx.parse::<usize>() {
                        Ok(n) => Key::Exact(id.to_string(), n),
                        Err(_) => return Err(MockScriptError::BadHeader { line: i + 1, text: line.into() }),
                    },
                    _ => return Err(MockScriptError::BadHeader { line: i + 1, text: line.into() }),
                };
                current = Some((key, i + 1, Vec::new()));
            } else if let Some((_, _, body)) = current.as_mut() {
                body.push(line);
            }
        }
        if let Some(done) = current.take() {
            script.commit(done)?;
        }
        Ok(script)
    }

    fn commit(&mut self, (key, line, mut body): (Key, usize, Vec<&str>)) -> Result<(), MockScriptError> {
        while body.last().is_some_and(|l| l.trim().is_empty()) {
            body.pop();
        }
        let text = body.join("\n");
        let dup = |key: String| MockScriptError::Duplicate { line, key };
        match key {
            Key::Exact(id, n) => {
                if self.entries.insert((id.clone(), n), text).is_some() {
                    return Err(dup(format!("{id} {n}")));
                }
            }
            Key::Any(id) => {
                if self.any_index.insert(id.clone(), text).is_some() {
                    return Err(dup(format!("{id} *")));
                }
            }
            Key::Default => {
                if self.default_answer.replace(text).is_some() {
                    return Err(dup("default".into()));
                }
            }
        }
        Ok(())
    }

    pub fn lookup(&self, template_id: &str, index: usize) -> Option<&str> {
        self.entries
            .get(&(template_id.to_string(), index))
            .or_else(|| self.any_index.get(template_id))
            .or(self.default_answer.as_ref())
            .map(String::as_str)
    }

    /// A fresh client with its own invocation counters, one per run.
    pub fn session(self: &Arc<Self>) -> MockClient {
        MockClient { script: Arc::clone(self), counters: Mutex::new(BTreeMap::new()), log: Mutex::new(Vec::new()) }
    }
}

/// Deterministic client answering from a [`MockScript`].
#[derive(Debug)]
pub struct MockClient {
    script: Arc<MockScript>,
    counters: Mutex<BTreeMap<String, usize>>,
    log: Mutex<Vec<LlmRequest>>,
}

impl MockClient {
    /// Requests received so far, in order.
    pub fn requests(&self) -> Vec<LlmRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl LlmClient for MockClient {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let index = {
            let mut counters = self.counters.lock().expect("mock counters poisoned");
            let c = counters.entry(req.template_id.clone()).or_insert(0);
            let i = *c;
            *c += 1;
            i
        };
        self.log.lock().expect("mock log poisoned").push(req.clone());
        match self.script.lookup(&req.template_id, index) {
            Some(text) => Ok(LlmResponse {
                text: text.to_string(),
                provider_meta: serde_json::json!({ "provider": "mock", "template_id": req.template_id, "index": index }),
            }),
            None => Err(LlmError::MockMiss { template_id: req.template_id.clone(), index }),
        }
    }
}
