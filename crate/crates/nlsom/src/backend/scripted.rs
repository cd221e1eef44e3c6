//! Deterministic scripted backends — the test oracle standing in for
//! hosted models.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Conversation};

/// Substring rules over the last incoming turn; first match wins, the
/// default answers when none match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedBehavior {
    /// (pattern, response): pattern is a literal substring of the last
    /// incoming turn.
    pub rules: Vec<(String, String)>,
    pub default: String,
    /// Responses containing any of these markers surface as refusals.
    #[serde(default = "default_refusal_markers")]
    pub refusal_markers: Vec<String>,
}

pub fn default_refusal_markers() -> Vec<String> {
    vec!["Sorry, I am an AI language model".to_string()]
}

impl ScriptedBehavior {
    pub fn with_default(default: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            default: default.into(),
            refusal_markers: default_refusal_markers(),
        }
    }

    pub fn rule(mut self, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push((pattern.into(), response.into()));
        self
    }

    fn response_for(&self, incoming: &str) -> &str {
        self.rules
            .iter()
            .find(|(pattern, _)| incoming.contains(pattern.as_str()))
            .map(|(_, response)| response.as_str())
            .unwrap_or(&self.default)
    }
}

/// A pure rule-table agent: same conversation, same response, everywhere.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    behavior: ScriptedBehavior,
}

impl ScriptedBackend {
    pub fn new(behavior: ScriptedBehavior) -> Self {
        Self { behavior }
    }

    pub fn constant(text: impl Into<String>) -> Self {
        Self::new(ScriptedBehavior::with_default(text))
    }
}

impl Backend for ScriptedBackend {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        if conversation.system_prompt.is_empty() {
            return Err(BackendError::Malformed(
                "degenerate conversation: no system prompt".to_string(),
            ));
        }
        let incoming = conversation.last_incoming().unwrap_or("");
        let response = self.behavior.response_for(incoming);
        for marker in &self.behavior.refusal_markers {
            if response.contains(marker.as_str()) {
                return Err(BackendError::Refusal(response.to_string()));
            }
        }
        Ok(response.to_string())
    }

    fn deterministic(&self) -> bool {
        true
    }
}

type ResponseFn = dyn Fn(&Conversation) -> Result<String, BackendError> + Send + Sync;

/// A scripted backend defined by an arbitrary function of the conversation.
/// Used for policy-style oracles (exploration captains, sequence scripts)
/// that need more than substring rules; the function must stay pure.
pub struct ScriptedFn {
    f: Arc<ResponseFn>,
    serial: bool,
}

impl ScriptedFn {
    pub fn new(
        f: impl Fn(&Conversation) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            serial: false,
        }
    }

    /// Marks the backend as intolerant of concurrent calls (e.g. when it
    /// closes over interior-mutable state such as a seeded RNG).
    pub fn serial(mut self) -> Self {
        self.serial = true;
        self
    }
}

impl Backend for ScriptedFn {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        (self.f)(conversation)
    }

    fn serial(&self) -> bool {
        self.serial
    }

    fn deterministic(&self) -> bool {
        true
    }
}

impl std::fmt::Debug for ScriptedFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedFn").finish_non_exhaustive()
    }
}
