//! Actor and critic model backends.
//!
//! Everything that produces model text goes through [`ModelBackend`]: the
//! chat-completions client for real endpoints, the scripted actor, the
//! ground-truth oracle critic and a fixed-reply stub for tests.

pub mod chat;
pub mod oracle;
pub mod prompts;
pub mod scripted;
pub mod verdict;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::GroundTruthProbe;
use crate::model::ActionProposal;

pub use chat::{ChatBackend, ChatClient, ChatError, EndpointConfig, ReplayTransport, Transport, UreqTransport};
pub use oracle::OracleCritic;
pub use prompts::{build_critic_prompt, PromptError, PromptOptions};
pub use scripted::{
    scripted_actor_step, Compliance, ErrorSchedule, FixedBackend, ScriptError, ScriptedActor, ScriptedActorProgram,
};
pub use verdict::parse_verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

/// Why the orchestrator is calling a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    Propose,
    Revise { guidance: String },
    Critique,
    /// Task-specification extraction for the data pipeline.
    Extract,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Propose => "propose",
            Phase::Revise { .. } => "revise",
            Phase::Critique => "critique",
            Phase::Extract => "extract",
        }
    }
}

/// Side information scripted backends key on. Text backends ignore it.
#[derive(Clone, Copy)]
pub struct RequestContext<'a> {
    pub task_id: &'a str,
    pub seed: u64,
    pub turn: u32,
    pub proposal: Option<&'a ActionProposal>,
    /// Set only for backends whose `wants_ground_truth` is true.
    pub probe: Option<&'a dyn GroundTruthProbe>,
}

pub struct ModelRequest<'a> {
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub phase: Phase,
    pub context: RequestContext<'a>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BackendIdentity {
    pub name: String,
    pub version: String,
}

impl fmt::Display for BackendIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("backend misuse: {0}")]
    Misuse(String),
}

/// Shared across concurrently running episodes.
pub trait ModelBackend: Send + Sync {
    fn identity(&self) -> BackendIdentity;

    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, BackendError>;

    /// Only the test oracle answers yes.
    fn wants_ground_truth(&self) -> bool {
        false
    }
}
