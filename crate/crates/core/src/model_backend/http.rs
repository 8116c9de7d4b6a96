use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{count_tokens, BackendError, ModelBackend, ModelRequest, ModelResponse};

pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Full chat-completions endpoint.
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    /// Extra attempts after a timeout or a 5xx answer.
    pub max_retries: u32,
    /// Delay before the first retry; doubled for each later one.
    pub backoff: Duration,
}

impl HttpConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            url: url.into(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(120),
            max_retries: DEFAULT_MAX_RETRIES,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads `MODEL_API_URL` and `MODEL_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, BackendError> {
        let url = std::env::var("MODEL_API_URL")
            .map_err(|_| BackendError::Config("MODEL_API_URL is not set".into()))?;
        let mut config = HttpConfig::new(url, model);
        config.api_key = std::env::var("MODEL_API_KEY")
            .ok()
            .filter(|k| !k.is_empty());
        Ok(config)
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

enum Failure {
    Retry(String),
    Fatal(BackendError),
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn body(&self, request: &ModelRequest) -> serde_json::Value {
        let mut content = vec![json!({ "type": "text", "text": request.input_text() })];
        for url in &request.images {
            content.push(json!({ "type": "image_url", "image_url": { "url": url } }));
        }
        json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": content }],
            "temperature": 0,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<(String, Option<Usage>), Failure> {
        let mut req = self.client.post(&self.config.url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Err(Failure::Retry(e.to_string()))
            }
            Err(e) => {
                return Err(Failure::Fatal(BackendError::Transport {
                    attempts: 1,
                    message: e.to_string(),
                }))
            }
        };
        let status = resp.status();
        if status.is_server_error() {
            return Err(Failure::Retry(format!("server returned {status}")));
        }
        let text = resp.text().map_err(|e| Failure::Retry(e.to_string()))?;
        if !status.is_success() {
            return Err(Failure::Fatal(BackendError::Protocol {
                status: status.as_u16(),
                message: text.chars().take(500).collect(),
            }));
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
            Failure::Fatal(BackendError::Protocol {
                status: status.as_u16(),
                message: format!("unreadable body: {e}"),
            })
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                Failure::Fatal(BackendError::Protocol {
                    status: status.as_u16(),
                    message: "no choices[0].message.content".into(),
                })
            })?;
        Ok((content, parsed.usage))
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&mut self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.check()?;
        let body = self.body(request);
        let start = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok((text, usage)) => {
                    let usage = usage.unwrap_or(Usage {
                        prompt_tokens: None,
                        completion_tokens: None,
                    });
                    return Ok(ModelResponse {
                        input_tokens: usage
                            .prompt_tokens
                            .unwrap_or_else(|| count_tokens(&request.input_text())),
                        output_tokens: usage
                            .completion_tokens
                            .unwrap_or_else(|| count_tokens(&text)),
                        text,
                        wall_ms: start.elapsed().as_millis() as u64,
                    });
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(message)) => {
                    if attempts > self.config.max_retries {
                        return Err(BackendError::Transport { attempts, message });
                    }
                    thread::sleep(self.config.backoff * 2u32.pow(attempts - 1));
                }
            }
        }
    }

    fn name(&self) -> &'static str {
        "http"
    }
}
