//! Blocking client for an OpenAI-compatible chat-completions endpoint.

use std::time::Duration;

use journey_core::llm::LlmClient;
use journey_core::{Error, Result};
use serde_json::{json, Value};

pub struct HttpLlmClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpLlmClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpLlmClient {
            agent,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
        }
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| Error::Backend(format!("{}: {e}", self.endpoint)))?;
        let reply: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Backend(format!("unreadable reply: {e}")))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| Error::Backend("reply has no choices[0].message.content".into()))
    }
}
