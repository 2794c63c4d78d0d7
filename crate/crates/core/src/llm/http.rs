//! OpenAI-compatible `chat/completions` client.

use std::time::Duration;

use serde_json::json;

use super::{LlmClient, LlmError, LlmRequest, LlmResponse, ProviderConfig};

#[derive(Debug, Clone)]
pub struct ChatCompletionsClient {
    config: ProviderConfig,
    agent: ureq::Agent,
}

enum Failure {
    Transient(LlmError),
    Fatal(LlmError),
}

impl ChatCompletionsClient {
    pub fn new(config: ProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        ChatCompletionsClient { config, agent }
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    pub fn request_body(&self, req: &LlmRequest) -> serde_json::Value {
        let model = if req.provider_model.is_empty() { &self.config.model } else { &req.provider_model };
        json!({
            "model": model,
            "messages": [{ "role": "user", "content": req.rendered_prompt }],
            "temperature": req.temperature,
            "max_tokens": req.max_answer_length,
        })
    }

    fn attempt(&self, req: &LlmRequest) -> Result<LlmResponse, Failure> {
        let mut call = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = call.send_json(self.request_body(req)).map_err(|e| match e {
            ureq::Error::Timeout(_) => Failure::Transient(LlmError::Timeout(self.config.timeout_secs)),
            ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
                Failure::Transient(LlmError::Provider(e.to_string()))
            }
            other => Failure::Fatal(LlmError::Provider(other.to_string())),
        })?;
        let status = resp.status().as_u16();
        let body: serde_json::Value = resp.into_body().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => Failure::Transient(LlmError::Timeout(self.config.timeout_secs)),
            other => Failure::Fatal(LlmError::Provider(format!("HTTP {status}: unreadable body: {other}"))),
        })?;
        if status == 429 || status >= 500 {
            return Err(Failure::Transient(LlmError::Provider(format!("HTTP {status}: {body}"))));
        }
        if status >= 400 {
            return Err(Failure::Fatal(LlmError::Provider(format!("HTTP {status}: {body}"))));
        }
        let text = body["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Failure::Fatal(LlmError::Provider("response has no choices[0].message.content".into())))?;
        let meta = json!({ "model": body["model"], "id": body["id"], "usage": body["usage"] });
        Ok(LlmResponse { text: text.to_string(), provider_meta: meta })
    }
}

impl LlmClient for ChatCompletionsClient {
    /// One retry on transient failures (timeouts, connection errors, 429, 5xx).
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        match self.attempt(req) {
            Ok(r) => Ok(r),
            Err(Failure::Fatal(e)) => Err(e),
            Err(Failure::Transient(first)) => {
                log::warn!("transient LLM failure, retrying once: {first}");
                match self.attempt(req) {
                    Ok(r) => Ok(r),
                    Err(Failure::Fatal(e) | Failure::Transient(e)) => Err(e),
                }
            }
        }
    }
}
