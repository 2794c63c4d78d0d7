//! Provider-agnostic LLM access: layered prompts, an OpenAI-compatible chat
//! client and a scripted mock for offline runs.

pub mod config;
pub mod http;
pub mod mock;
pub mod prompt;

use serde::{Deserialize, Serialize};

pub use config::{ProviderConfig, ProviderOverrides};
pub use http::ChatCompletionsClient;
pub use mock::{MockClient, MockScript, MockScriptError};
pub use prompt::{
    extract_answer, fenced_block_extractor, render_prompt, wrap_in_fence, AnswerKind, LayerName, PromptError, PromptLayer, PromptTemplate,
    SlotSource, TemplateLibrary,
};

pub const DEFAULT_MAX_ANSWER_LENGTH: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    /// Template the prompt was rendered from; keys the mock script.
    pub template_id: String,
    pub rendered_prompt: String,
    pub temperature: f64,
    pub max_answer_length: usize,
    pub provider_model: String,
}

impl LlmRequest {
    pub fn new(template_id: &str, prompt: &str) -> Self {
        LlmRequest {
            template_id: template_id.into(),
            rendered_prompt: prompt.into(),
            temperature: 0.0,
            max_answer_length: DEFAULT_MAX_ANSWER_LENGTH,
            provider_model: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub provider_meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("provider error: {0}")]
    Provider(String),
    #[error("request timed out after {0} s")]
    Timeout(u64),
    #[error("mock script has no answer for template {template_id:?} invocation {index}")]
    MockMiss { template_id: String, index: usize },
}

/// A chat-completion backend. Implementations must tolerate concurrent requests.
pub trait LlmClient: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(req)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(req)
    }
}
