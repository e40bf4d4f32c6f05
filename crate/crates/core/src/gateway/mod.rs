//! Model access: request types, completion backends, prompt builders and
//! response parsing.

mod backend;
pub mod parse;
pub mod prompts;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{
    fixture_path, Backend, FnBackend, HttpBackend, HttpConfig, RecordingBackend, ReplayBackend, ReplayMode,
};
pub use parse::{extract_program, parse_refactor_response, ProposedHelper, ProposedProgram, RefactorProposal};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo-0613";
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Instruction text first, then the filled-in prompt.
    pub fn new(system: &str, prompt: String) -> Self {
        ChatRequest {
            model: DEFAULT_MODEL.into(),
            messages: vec![ChatMessage::system(system), ChatMessage::user(prompt)],
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_model(mut self, model: &str) -> Self {
        self.model = model.to_string();
        self
    }

    /// Serialized form; field order is fixed by the struct so this is stable.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("requests always serialize")
    }

    /// Hex sha256 of the canonical JSON. Replay fixtures are stored under it.
    pub fn key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// The prompt body (last user message).
    pub fn prompt(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("no replay fixture for request {hash}")]
    ReplayMiss { hash: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("fixture I/O: {0}")]
    Io(#[from] std::io::Error),
}
