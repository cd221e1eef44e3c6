//! Agents, messages, and the append-only transcript.
//!
//! A transcript is the replayable record of a mindstorm: messages carry a
//! strictly increasing `seq` (1..n, no gaps) and may only be appended.
//! Replaying `Transcript::append` over a serialized transcript reconstructs
//! it byte-identically.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A society member: opaque identity plus a human-readable label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub id: String,
    pub name: String,
}

impl AgentId {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
        }
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.id)
    }
}

/// Role assignment: the system prompt an agent plays under, and which
/// backend answers for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub role_name: String,
    pub system_prompt: String,
    pub backend_ref: String,
}

impl RoleSpec {
    pub fn new(
        role_name: impl Into<String>,
        system_prompt: impl Into<String>,
        backend_ref: impl Into<String>,
    ) -> Self {
        Self {
            role_name: role_name.into(),
            system_prompt: system_prompt.into(),
            backend_ref: backend_ref.into(),
        }
    }
}

/// Protocol stage a message belongs to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Mindstorm,
    Gathering,
    Execution,
    Economy,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Init => "init",
            Stage::Mindstorm => "mindstorm",
            Stage::Gathering => "gathering",
            Stage::Execution => "execution",
            Stage::Economy => "economy",
        };
        write!(f, "{s}")
    }
}

/// One utterance in a mindstorm. `round` is ≥ 1 only during the mindstorm
/// stage and 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub sender: AgentId,
    pub recipients: BTreeSet<AgentId>,
    pub stage: Stage,
    pub round: u32,
    pub content: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Message {
    pub fn addressed_to(&self, agent: &AgentId) -> bool {
        self.recipients.contains(agent)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TranscriptError {
    #[error("protocol corruption: expected seq {expected}, got {got}")]
    SeqMismatch { expected: u64, got: u64 },
    #[error("protocol corruption: round {round} outside mindstorm stage {stage}")]
    RoundOutsideMindstorm { stage: Stage, round: u32 },
}

/// Append-only, replayable record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub run_id: String,
    pub config_digest: String,
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new(run_id: impl Into<String>, config_digest: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            config_digest: config_digest.into(),
            messages: Vec::new(),
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// The seq the next appended message must carry.
    pub fn next_seq(&self) -> u64 {
        self.messages.last().map(|m| m.seq).unwrap_or(0) + 1
    }

    /// Appends one message; `msg.seq` must be exactly `next_seq()`.
    pub fn append(&mut self, msg: Message) -> Result<(), TranscriptError> {
        let expected = self.next_seq();
        if msg.seq != expected {
            return Err(TranscriptError::SeqMismatch {
                expected,
                got: msg.seq,
            });
        }
        if (msg.round >= 1) != (msg.stage == Stage::Mindstorm) {
            return Err(TranscriptError::RoundOutsideMindstorm {
                stage: msg.stage,
                round: msg.round,
            });
        }
        self.messages.push(msg);
        Ok(())
    }

    /// All messages matching the filter, in seq order.
    pub fn query(&self, filter: &MessageFilter) -> Vec<&Message> {
        self.messages.iter().filter(|m| filter.matches(m)).collect()
    }

    /// Message count per stage.
    pub fn stage_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for m in &self.messages {
            *counts.entry(m.stage.to_string()).or_insert(0) += 1;
        }
        counts
    }
}

/// History query: every `Some` field must match; an empty filter matches all.
#[derive(Debug, Clone, Default)]
pub struct MessageFilter {
    pub stage: Option<Stage>,
    pub round: Option<u32>,
    pub sender: Option<AgentId>,
    pub recipients_contains: Option<AgentId>,
}

impl MessageFilter {
    pub fn stage(stage: Stage) -> Self {
        Self {
            stage: Some(stage),
            ..Self::default()
        }
    }

    pub fn round(mut self, round: u32) -> Self {
        self.round = Some(round);
        self
    }

    pub fn from_sender(sender: AgentId) -> Self {
        Self {
            sender: Some(sender),
            ..Self::default()
        }
    }

    pub fn matches(&self, m: &Message) -> bool {
        self.stage.is_none_or(|s| m.stage == s)
            && self.round.is_none_or(|r| m.round == r)
            && self.sender.as_ref().is_none_or(|s| &m.sender == s)
            && self
                .recipients_contains
                .as_ref()
                .is_none_or(|r| m.recipients.contains(r))
    }
}

/// Convenience builder for protocol code.
pub fn message(
    seq: u64,
    sender: &AgentId,
    recipients: impl IntoIterator<Item = AgentId>,
    stage: Stage,
    round: u32,
    content: impl Into<String>,
) -> Message {
    Message {
        seq,
        sender: sender.clone(),
        recipients: recipients.into_iter().collect(),
        stage,
        round,
        content: content.into(),
        meta: BTreeMap::new(),
    }
}
