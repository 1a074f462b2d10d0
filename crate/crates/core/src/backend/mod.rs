//! Rankers that answer prompts: a chat-completions HTTP client, a family of
//! simulated position-biased rankers, and the parser that maps free-text
//! answers back onto candidate ids.

mod parse;
mod remote;
mod simulator;

pub use parse::{
    normalize_title, parse_and_match, parse_and_match_with, token_set_similarity, ParseError, ParsePolicy, Parsed,
    DEFAULT_SIMILARITY,
};
pub use remote::{RemoteBackend, RemoteSpec};
pub use simulator::{
    relevance_map, render_numbered, simulate_rank, RelevanceSource, SimulatorBackend, SimulatorParams, SimulatorPreset,
    SimulatorSpec, LENGTH_REFERENCE,
};

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::PcLeg;
use crate::strategies::PromptBundle;
use crate::types::{CandidateList, EvalSample, RepairFlags};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    /// Worth another attempt under the retry policy.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Timeout(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::BadResponse(_) | BackendError::Config(_) => false,
        }
    }
}

/// Identifies one backend call deterministically within a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallContext {
    pub run_id: String,
    pub sample_key: String,
    pub user_id: String,
    pub trial: usize,
    pub leg: Option<PcLeg>,
    pub strategy: String,
    /// Bootstrap member index or RISE iteration.
    pub iteration: usize,
    /// Re-prompt counter for repair retries.
    pub attempt: usize,
}

impl CallContext {
    pub fn new(sample: &EvalSample) -> Self {
        CallContext {
            run_id: String::new(),
            sample_key: sample.user_id().to_owned(),
            user_id: sample.user_id().to_owned(),
            trial: 0,
            leg: None,
            strategy: String::new(),
            iteration: 0,
            attempt: 0,
        }
    }
}

pub struct CompletionRequest<'a> {
    pub prompt: &'a PromptBundle,
    pub sample: &'a EvalSample,
    /// Candidates in the order shown in the prompt.
    pub presented: &'a CandidateList,
    /// How many titles the prompt asks for.
    pub expected_count: usize,
    pub temperature: f64,
    pub context: &'a CallContext,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
}

/// Anything that turns a prompt into response text.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError>;

    /// Cheap reachability probe run once before an experiment.
    fn ping(&self) -> Result<(), BackendError> {
        Ok(())
    }

    fn is_remote(&self) -> bool {
        false
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }
    fn ping(&self) -> Result<(), BackendError> {
        (**self).ping()
    }
    fn is_remote(&self) -> bool {
        (**self).is_remote()
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }
    fn ping(&self) -> Result<(), BackendError> {
        (**self).ping()
    }
    fn is_remote(&self) -> bool {
        (**self).is_remote()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Remote(RemoteSpec),
    Simulator(SimulatorSpec),
}

/// Which ranker answers prompts and how many calls may be in flight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

fn default_concurrency() -> usize {
    1
}

impl BackendSpec {
    pub fn simulator(spec: SimulatorSpec) -> Self {
        BackendSpec {
            kind: BackendKind::Simulator(spec),
            max_concurrency: 1,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_concurrency == 0 {
            return Err(BackendError::Config("max_concurrency must be at least 1".into()));
        }
        match &self.kind {
            BackendKind::Remote(r) => r.validate(),
            BackendKind::Simulator(s) => s.params.validate(),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        self.validate()?;
        Ok(match &self.kind {
            BackendKind::Remote(r) => Arc::new(RemoteBackend::new(r.clone())?),
            BackendKind::Simulator(s) => Arc::new(SimulatorBackend::new(s.clone())),
        })
    }
}

/// One line of the transcript log: a single backend call, verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub run_id: String,
    pub key: String,
    pub user_id: String,
    pub trial: usize,
    pub leg: Option<PcLeg>,
    pub strategy: String,
    pub iteration: usize,
    pub attempt: usize,
    pub prompt: String,
    pub response: String,
    pub parse_outcome: String,
    pub repairs: RepairFlags,
    pub latency_ms: u64,
}
