//! Uniform completion interface over a remote chat-completions service and
//! a deterministic scripted backend, plus the prompt templates.

mod remote;
mod scripted;
mod templates;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{ChatBackend, ChatBackendConfig};
pub use scripted::{ScriptEntry, ScriptFile, ScriptedBackend, KEY_SEPARATOR, SCRIPT_SCHEMA};
pub use templates::{Template, TemplateError, TemplateSet, TEMPLATE_VERSION};

/// Pipeline stage that produced a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    SubgoalInference,
    Partition,
    HighInsight,
    LowInsight,
    Grounding,
    Planner,
    Executor,
    Reflexion,
}

impl RoleTag {
    pub const ALL: [RoleTag; 8] = [
        RoleTag::SubgoalInference,
        RoleTag::Partition,
        RoleTag::HighInsight,
        RoleTag::LowInsight,
        RoleTag::Grounding,
        RoleTag::Planner,
        RoleTag::Executor,
        RoleTag::Reflexion,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoleTag::SubgoalInference => "subgoal_inference",
            RoleTag::Partition => "partition",
            RoleTag::HighInsight => "high_insight",
            RoleTag::LowInsight => "low_insight",
            RoleTag::Grounding => "grounding",
            RoleTag::Planner => "planner",
            RoleTag::Executor => "executor",
            RoleTag::Reflexion => "reflexion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        RoleTag::ALL.iter().copied().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_MAX_OUTPUT: u32 = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub role_tag: RoleTag,
    pub prompt: String,
    pub temperature: f64,
    pub max_output: u32,
}

impl CompletionRequest {
    pub fn new(role_tag: RoleTag, prompt: impl Into<String>) -> Self {
        Self {
            role_tag,
            prompt: prompt.into(),
            temperature: 0.0,
            max_output: DEFAULT_MAX_OUTPUT,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("empty prompt for role {0}")]
    EmptyPrompt(RoleTag),
    #[error("no script entry for role {role} matches prompt starting {excerpt:?}")]
    NoMatchingEntry { role: RoleTag, excerpt: String },
    #[error("model backend unreachable: {0}")]
    Unreachable(String),
    #[error("model backend rejected credentials (status {0})")]
    Auth(u16),
    #[error("model backend quota exhausted")]
    Quota,
    #[error("model backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Decode(String),
    #[error("invalid script: {0}")]
    Script(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Unreachable(_) | BackendError::Quota => true,
            BackendError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// Anything that can answer a completion request.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<M> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}
