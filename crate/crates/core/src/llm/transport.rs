use std::time::Duration;

use serde_json::json;

use super::{LlmError, Prompt, ProviderConfig};

/// Wire adapter for one provider protocol.
pub trait Transport: Send + Sync {
    /// One completion for `prompt`; `seed` is the sample index.
    fn chat(&self, config: &ProviderConfig, prompt: &Prompt, seed: u64)
        -> Result<String, LlmError>;
}

/// Closure-backed transport, used as a test double and for fault injection.
pub struct FnTransport<F>(F);

impl<F> FnTransport<F>
where
    F: Fn(&ProviderConfig, &Prompt, u64) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnTransport(f)
    }
}

impl<F> Transport for FnTransport<F>
where
    F: Fn(&ProviderConfig, &Prompt, u64) -> Result<String, LlmError> + Send + Sync,
{
    fn chat(
        &self,
        config: &ProviderConfig,
        prompt: &Prompt,
        seed: u64,
    ) -> Result<String, LlmError> {
        (self.0)(config, prompt, seed)
    }
}

/// OpenAI-style `POST {base_url}/chat/completions`.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn chat(
        &self,
        config: &ProviderConfig,
        prompt: &Prompt,
        seed: u64,
    ) -> Result<String, LlmError> {
        let mut messages = vec![json!({"role": "system", "content": prompt.system})];
        messages.extend(
            prompt
                .messages
                .iter()
                .map(|m| json!({"role": m.role, "content": m.content})),
        );
        let body = json!({
            "model": config.model,
            "messages": messages,
            "temperature": prompt.temperature,
            "max_tokens": prompt.max_tokens,
            "seed": seed,
            "n": 1,
        });
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let key = config.api_key.clone().unwrap_or_default();
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| LlmError::Transport {
                message: e.to_string(),
                retriable: true,
            })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport {
                message: e.to_string(),
                retriable: true,
            })?;
        if status != 200 {
            return Err(LlmError::Http { status, body: text });
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("missing choices[0].message.content".into()))
    }
}
