//! Uniform client over chat-completion endpoints.
//!
//! Two HTTP dialects are spoken (OpenAI-compatible `/v1/chat/completions`
//! and Ollama-compatible `/api/chat`) plus a seeded mock. Every request is a
//! single user message with no system prompt. [`Provider::complete`] wraps a
//! [`Transport`] with retry, exponential backoff and an in-flight bound.

mod http;
mod limiter;
mod mock;

pub use http::{classify_status, OllamaTransport, OpenAiTransport, StatusClass};
pub use limiter::{Backoff, InFlightLimiter, Permit};
pub use mock::{mock_draw, MockEntry, MockKey, MockScript, MockTransport, WeightedOutput};

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::language::Language;

/// Prefix of the environment variables holding provider secrets.
pub const SECRET_ENV_PREFIX: &str = "RNGAUDIT_KEY_";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider `{name}` is misconfigured: {reason}")]
    InvalidConfig { name: String, reason: String },
    #[error("provider `{provider}` needs secret environment variable {var}")]
    MissingSecret { provider: String, var: String },
    #[error("provider rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("gave up after {attempts} attempts; last error: {last}")]
    TransientExhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    WireFormat(String),
    #[error("mock script has no entry for {0}")]
    ScriptCoverage(String),
    #[error("cannot load mock script {path}: {reason}")]
    MockScript { path: String, reason: String },
}

/// Failure of a single attempt, as reported by a transport.
#[derive(Debug)]
pub enum AttemptError {
    /// Timeouts, connection drops, HTTP 408/429/5xx.
    Transient(String),
    /// Anything retrying cannot fix.
    Fatal(GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    OpenaiCompatible,
    OllamaCompatible,
    Mock,
}

fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_tokens() -> u32 {
    512
}
fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    pub kind: ProviderKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_id: String,
    /// Suffix of the `RNGAUDIT_KEY_<NAME>` variable carrying the bearer token.
    #[serde(default)]
    pub api_key_ref: Option<String>,
    #[serde(default = "default_timeout_secs", alias = "timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Minimum spacing between request starts.
    #[serde(default)]
    pub min_interval_ms: u64,
    /// First retry delay; doubles per retry. Defaults to 500 ms, 0 for mocks.
    #[serde(default)]
    pub backoff_base_ms: Option<u64>,
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn mock(name: impl Into<String>, script: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            kind: ProviderKind::Mock,
            base_url: None,
            model_id: "mock".into(),
            api_key_ref: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_tokens: default_max_tokens(),
            max_in_flight: default_max_in_flight(),
            min_interval_ms: 0,
            backoff_base_ms: None,
            mock_script: Some(script.into()),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |reason: &str| {
            Err(GatewayError::InvalidConfig {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.is_empty()
            || self.name.contains("__")
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return bad("name must be non-empty ASCII [A-Za-z0-9._-] without `__`");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        match self.kind {
            ProviderKind::Mock if self.mock_script.is_none() => bad("mock providers need `mock_script`"),
            ProviderKind::OpenaiCompatible | ProviderKind::OllamaCompatible => match self.base_url.as_deref() {
                None | Some("") => bad("network providers need `base_url`"),
                Some(_) if self.model_id.is_empty() => bad("network providers need `model_id`"),
                Some(_) => Ok(()),
            },
            ProviderKind::Mock => Ok(()),
        }
    }

    pub fn backoff(&self) -> Backoff {
        let base = self.backoff_base_ms.unwrap_or(match self.kind {
            ProviderKind::Mock => 0,
            _ => 500,
        });
        Backoff::new(Duration::from_millis(base), Duration::from_secs(60))
    }

    /// Environment variable consulted for this provider's secret, if any.
    pub fn secret_var(&self) -> Option<String> {
        self.api_key_ref.as_ref().map(|r| secret_var_name(r))
    }
}

pub fn secret_var_name(key_ref: &str) -> String {
    let suffix: String = key_ref
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("{SECRET_ENV_PREFIX}{suffix}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Experimental coordinates of a request. HTTP dialects ignore it; the mock
/// keys its draws on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallOrigin {
    pub language: Language,
    pub range_upper: u64,
    pub temperature: f64,
    pub call_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResponse {
    /// Exactly what the endpoint returned; never trimmed.
    pub text: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

pub trait Transport: Send + Sync {
    /// One attempt. `attempt` is 0-based.
    fn send(&self, request: &CompletionRequest, origin: &CallOrigin, attempt: u32) -> Result<String, AttemptError>;
}

pub struct Provider {
    config: ProviderConfig,
    transport: Box<dyn Transport>,
    limiter: InFlightLimiter,
    backoff: Backoff,
}

impl std::fmt::Debug for Provider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Provider")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Provider {
    /// Build the transport a config describes. Relative mock script paths
    /// resolve against `base_dir`; `default_seed` seeds scripts without their own.
    pub fn from_config(config: &ProviderConfig, base_dir: &Path, default_seed: u64) -> Result<Self, GatewayError> {
        config.validate()?;
        let timeout = Duration::from_secs(config.timeout_secs.max(1));
        let transport: Box<dyn Transport> = match config.kind {
            ProviderKind::Mock => {
                let path = config.mock_script.as_ref().expect("validated");
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                Box::new(MockTransport::new(MockScript::load(&path, default_seed)?))
            }
            ProviderKind::OpenaiCompatible => Box::new(OpenAiTransport::new(
                config.base_url.as_deref().expect("validated"),
                resolve_secret(config)?,
                timeout,
            )),
            ProviderKind::OllamaCompatible => Box::new(OllamaTransport::new(
                config.base_url.as_deref().expect("validated"),
                resolve_secret(config)?,
                timeout,
            )),
        };
        Ok(Self::with_transport(config.clone(), transport))
    }

    pub fn with_transport(config: ProviderConfig, transport: Box<dyn Transport>) -> Self {
        let limiter = InFlightLimiter::new(
            config.max_in_flight.max(1),
            Duration::from_millis(config.min_interval_ms),
        );
        let backoff = config.backoff();
        Self {
            config,
            transport,
            limiter,
            backoff,
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn request_for(&self, prompt: String, temperature: f64) -> CompletionRequest {
        CompletionRequest {
            model_id: self.config.model_id.clone(),
            prompt,
            temperature,
            max_tokens: self.config.max_tokens,
        }
    }

    /// Send with retries. Transient failures back off and retry up to
    /// `max_retries` times; everything else returns at once.
    pub fn complete(
        &self,
        request: &CompletionRequest,
        origin: &CallOrigin,
    ) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let started = Instant::now();
        let mut attempt = 0u32;
        loop {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.transport.send(request, origin, attempt)
            };
            match outcome {
                Ok(text) => {
                    return Ok(CompletionResponse {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts: attempt + 1,
                    })
                }
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Transient(last)) => {
                    if attempt >= self.config.max_retries {
                        return Err(GatewayError::TransientExhausted {
                            attempts: attempt + 1,
                            last,
                        });
                    }
                    log::debug!(
                        "{}: transient failure on attempt {} ({last}); retrying",
                        self.config.name,
                        attempt + 1
                    );
                    std::thread::sleep(self.backoff.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

fn resolve_secret(config: &ProviderConfig) -> Result<Option<String>, GatewayError> {
    match config.secret_var() {
        None => Ok(None),
        Some(var) => std::env::var(&var).map(Some).map_err(|_| GatewayError::MissingSecret {
            provider: config.name.clone(),
            var,
        }),
    }
}
