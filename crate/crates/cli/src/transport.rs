//! HTTP chat-completions transport for the teacher and judge endpoints,
//! configured through environment variables (`TEACHER_URL`/`TEACHER_KEY`/
//! `TEACHER_MODEL` and the `JUDGE_*` equivalents). Page images are inlined
//! as base64 data URLs.

use alr_core::distill::{JudgeClient, TeacherClient, TeacherRequest, TransportError};
use base64::Engine;
use serde_json::{json, Value};
use std::time::Duration;

pub struct HttpChatClient {
    endpoint: String,
    api_key: Option<String>,
    model: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(
        endpoint: String,
        api_key: Option<String>,
        model: Option<String>,
    ) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpChatClient { endpoint, api_key, model, client })
    }

    /// Reads `{prefix}_URL` (required), `{prefix}_KEY` and `{prefix}_MODEL`
    /// (optional).
    pub fn from_env(prefix: &str) -> Result<Self, String> {
        let endpoint = std::env::var(format!("{prefix}_URL"))
            .map_err(|_| format!("{prefix}_URL is not set"))?;
        let api_key = std::env::var(format!("{prefix}_KEY")).ok();
        let model = std::env::var(format!("{prefix}_MODEL")).ok();
        Self::new(endpoint, api_key, model)
    }

    fn post_chat(&self, messages: Value) -> Result<String, TransportError> {
        let mut body = json!({ "messages": messages });
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| TransportError(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(TransportError(format!("{status}: {text}")));
        }
        let value: Value =
            response.json().map_err(|e| TransportError(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError("response carries no message content".into()))
    }
}

fn mime_for(path: &str) -> &'static str {
    match path.rsplit('.').next().map(str::to_ascii_lowercase).as_deref() {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "image/png",
    }
}

impl TeacherClient for HttpChatClient {
    fn generate(&self, request: &TeacherRequest) -> Result<String, TransportError> {
        let mut content = vec![json!({ "type": "text", "text": request.user_text })];
        for page in &request.images {
            let bytes = std::fs::read(&page.image_path)
                .map_err(|e| TransportError(format!("{}: {e}", page.image_path)))?;
            let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
            content.push(json!({
                "type": "image_url",
                "image_url": {
                    "url": format!("data:{};base64,{encoded}", mime_for(&page.image_path))
                }
            }));
        }
        self.post_chat(json!([
            { "role": "system", "content": request.instruction },
            { "role": "user", "content": content },
        ]))
    }
}

impl JudgeClient for HttpChatClient {
    fn judge(&self, prompt: &str) -> Result<String, TransportError> {
        self.post_chat(json!([{ "role": "user", "content": prompt }]))
    }
}
