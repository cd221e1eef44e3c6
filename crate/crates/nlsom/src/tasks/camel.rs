//! Role-playing task solving: a user agent instructs, an assistant agent
//! solves, with an optional task specifier refining the task first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendRegistry, Conversation, Speaker};
use crate::logfmt;
use crate::message::{AgentId, Message, RoleSpec, Stage, Transcript};

use super::TaskError;

pub const DEFAULT_DONE_MARKER: &str = "CAMEL_TASK_DONE";
pub const DEFAULT_MAX_MESSAGES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamelConfig {
    pub user_role: RoleSpec,
    pub assistant_role: RoleSpec,
    /// Optional context-expansion agent run before role-playing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specifier: Option<RoleSpec>,
    pub max_messages: usize,
    pub done_marker: String,
}

impl CamelConfig {
    pub fn new(user_role: RoleSpec, assistant_role: RoleSpec) -> Self {
        Self {
            user_role,
            assistant_role,
            specifier: None,
            max_messages: DEFAULT_MAX_MESSAGES,
            done_marker: DEFAULT_DONE_MARKER.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    /// The user agent declared the task done.
    Done,
    /// The message cap was reached.
    Limit,
    /// A backend failed mid-loop; the transcript is partial.
    BackendError,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::Done => "done",
            TerminationReason::Limit => "limit",
            TerminationReason::BackendError => "backend-error",
        }
    }
}

#[derive(Debug)]
pub struct CamelOutcome {
    pub transcript: Transcript,
    pub reason: TerminationReason,
    /// Messages counted against `max_messages`: the task assignment plus
    /// every role-playing turn (the specifier exchange is not counted).
    pub messages: usize,
    pub specified_task: Option<String>,
}

/// Runs the role-playing loop until the user agent emits the done marker,
/// the message count reaches `max_messages`, or a backend fails.
pub fn run_camel(
    cfg: &CamelConfig,
    task: &str,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<CamelOutcome, TaskError> {
    if cfg.max_messages < 2 {
        return Err(TaskError::Invalid("max_messages must be >= 2".to_string()));
    }
    let resolve = |role: &RoleSpec| {
        registry
            .get(&role.backend_ref)
            .ok_or_else(|| TaskError::MissingBackend(role.backend_ref.clone()))
    };
    let user_backend = resolve(&cfg.user_role)?;
    let assistant_backend = resolve(&cfg.assistant_role)?;

    let taskmaster = AgentId::new("taskmaster", "Taskmaster");
    let user_agent = AgentId::new("user-agent", cfg.user_role.role_name.clone());
    let assistant_agent = AgentId::new("assistant-agent", cfg.assistant_role.role_name.clone());

    let digest = logfmt::digest_of(&(task, &cfg.max_messages, &cfg.done_marker));
    let mut transcript = Transcript::new(run_id, digest);
    let push = |t: &mut Transcript,
                sender: &AgentId,
                to: &AgentId,
                stage: Stage,
                round: u32,
                content: &str,
                meta: BTreeMap<String, String>|
     -> Result<(), TaskError> {
        t.append(Message {
            seq: t.next_seq(),
            sender: sender.clone(),
            recipients: std::iter::once(to.clone()).collect(),
            stage,
            round,
            content: content.to_string(),
            meta,
        })?;
        Ok(())
    };
    let tag = |kind: &str| -> BTreeMap<String, String> {
        std::iter::once(("kind".to_string(), kind.to_string())).collect()
    };

    // Optional task specification.
    let mut final_task = task.to_string();
    let mut specified_task = None;
    if let Some(specifier_role) = &cfg.specifier {
        let specifier_backend = resolve(specifier_role)?;
        let specifier_agent = AgentId::new("specifier", specifier_role.role_name.clone());
        let request = format!("Here is a task: {task}. Please make it more specific.");
        push(
            &mut transcript,
            &taskmaster,
            &specifier_agent,
            Stage::Init,
            0,
            &request,
            tag("specifier"),
        )?;
        let specified = specifier_backend
            .respond(&Conversation::new(specifier_role.system_prompt.clone()).with_user(&request))
            .map_err(|source| TaskError::Backend {
                role: "specifier".to_string(),
                source,
            })?;
        push(
            &mut transcript,
            &specifier_agent,
            &taskmaster,
            Stage::Init,
            0,
            &specified,
            tag("specifier"),
        )?;
        specified_task = Some(specified.clone());
        final_task = specified;
    }

    // Task assignment is the first counted message.
    let assignment = format!(
        "Here is the task: {final_task}. Give me instructions one at a time to complete it. Say {} when the task is complete.",
        cfg.done_marker
    );
    push(
        &mut transcript,
        &taskmaster,
        &user_agent,
        Stage::Init,
        0,
        &assignment,
        tag("task-assignment"),
    )?;
    let mut count = 1usize;

    let mut user_conversation =
        Conversation::new(cfg.user_role.system_prompt.clone()).with_user(&assignment);
    let mut assistant_conversation =
        Conversation::new(cfg.assistant_role.system_prompt.clone());

    let mut round = 0u32;
    let reason = loop {
        if count >= cfg.max_messages {
            break TerminationReason::Limit;
        }
        round += 1;

        // User agent instructs.
        let instruction = match user_backend.respond(&user_conversation) {
            Ok(text) => text,
            Err(_) => break TerminationReason::BackendError,
        };
        user_conversation.push(Speaker::Assistant, &instruction);
        assistant_conversation.push(Speaker::User, &instruction);
        push(
            &mut transcript,
            &user_agent,
            &assistant_agent,
            Stage::Mindstorm,
            round,
            &instruction,
            tag("instruction"),
        )?;
        count += 1;
        if instruction.contains(&cfg.done_marker) {
            break TerminationReason::Done;
        }
        if count >= cfg.max_messages {
            break TerminationReason::Limit;
        }

        // Assistant replies.
        let reply = match assistant_backend.respond(&assistant_conversation) {
            Ok(text) => text,
            Err(_) => break TerminationReason::BackendError,
        };
        assistant_conversation.push(Speaker::Assistant, &reply);
        user_conversation.push(Speaker::User, &reply);
        push(
            &mut transcript,
            &assistant_agent,
            &user_agent,
            Stage::Mindstorm,
            round,
            &reply,
            tag("solution"),
        )?;
        count += 1;
    };

    Ok(CamelOutcome {
        transcript,
        reason,
        messages: count,
        specified_task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Backend, BackendError, ScriptedBackend, ScriptedFn};
    use std::sync::Arc;

    fn roles() -> (RoleSpec, RoleSpec) {
        (
            RoleSpec::new("Python Programmer", "You are a Python Programmer.", "user-be"),
            RoleSpec::new("Game Developer", "You are a Game Developer.", "assistant-be"),
        )
    }

    /// User agent that emits the done marker on its nth instruction.
    fn marker_user(n: usize) -> Arc<dyn Backend> {
        Arc::new(ScriptedFn::new(move |c: &Conversation| {
            let instructions_given = c
                .turns
                .iter()
                .filter(|(s, _)| *s == Speaker::Assistant)
                .count();
            if instructions_given + 1 >= n {
                Ok(format!("{DEFAULT_DONE_MARKER} great work"))
            } else {
                Ok(format!("Instruction {}", instructions_given + 1))
            }
        }))
    }

    fn registry(user: Arc<dyn Backend>) -> BackendRegistry {
        let mut registry = BackendRegistry::new();
        registry.insert("user-be", user);
        registry.insert(
            "assistant-be",
            Arc::new(ScriptedBackend::constant("Here is the code: import tkinter as tk")),
        );
        registry
    }

    #[test]
    fn marker_terminates_at_message_six() {
        let (user_role, assistant_role) = roles();
        let cfg = CamelConfig::new(user_role, assistant_role);
        // assignment=1, instr=2, reply=3, instr=4, reply=5, marker instr=6
        let registry = registry(marker_user(3));
        let outcome = run_camel(&cfg, "Create a dice game", &registry, "run").unwrap();
        assert_eq!(outcome.reason, TerminationReason::Done);
        assert_eq!(outcome.messages, 6);
        assert_eq!(outcome.transcript.len(), 6);
        let last = outcome.transcript.messages().last().unwrap();
        assert!(last.content.contains(DEFAULT_DONE_MARKER));
        assert_eq!(last.sender.id, "user-agent");
    }

    #[test]
    fn no_marker_hits_the_limit_exactly() {
        let (user_role, assistant_role) = roles();
        let cfg = CamelConfig::new(user_role, assistant_role);
        let registry = registry(Arc::new(ScriptedBackend::constant("keep going")));
        let outcome = run_camel(&cfg, "Create a dice game", &registry, "run").unwrap();
        assert_eq!(outcome.reason, TerminationReason::Limit);
        assert_eq!(outcome.messages, DEFAULT_MAX_MESSAGES);
        assert_eq!(outcome.transcript.len(), DEFAULT_MAX_MESSAGES);
    }

    #[test]
    fn length_never_exceeds_the_cap() {
        let (user_role, assistant_role) = roles();
        for cap in [2usize, 3, 7, 10] {
            let mut cfg = CamelConfig::new(user_role.clone(), assistant_role.clone());
            cfg.max_messages = cap;
            let registry = registry(Arc::new(ScriptedBackend::constant("more")));
            let outcome = run_camel(&cfg, "task", &registry, "run").unwrap();
            assert!(outcome.messages <= cap);
            assert_eq!(outcome.messages, cap);
        }
    }

    #[test]
    fn specifier_expansion_reaches_the_first_instruction() {
        let (user_role, assistant_role) = roles();
        let mut cfg = CamelConfig::new(user_role, assistant_role);
        cfg.specifier = Some(RoleSpec::new(
            "Task Specifier",
            "You make tasks specific.",
            "specifier-be",
        ));
        cfg.max_messages = 4;
        let mut registry = registry(Arc::new(ScriptedFn::new(|c: &Conversation| {
            // echo the assignment so the expansion is observable
            Ok(format!("First: {}", c.last_incoming().unwrap_or("")))
        })));
        registry.insert(
            "specifier-be",
            Arc::new(ScriptedBackend::constant(
                "Include a GUI with a welcoming image, and roll two dice.",
            )),
        );
        let outcome = run_camel(&cfg, "Create a simple dice game", &registry, "run").unwrap();
        assert_eq!(
            outcome.specified_task.as_deref(),
            Some("Include a GUI with a welcoming image, and roll two dice.")
        );
        let first_instruction = outcome
            .transcript
            .messages()
            .iter()
            .find(|m| m.meta.get("kind").map(|k| k == "instruction").unwrap_or(false))
            .unwrap();
        assert!(first_instruction.content.contains("welcoming image"));
        // specifier exchange is journaled but not counted
        assert_eq!(outcome.transcript.len(), outcome.messages + 2);
    }

    #[test]
    fn backend_failure_is_a_recorded_reason() {
        let (user_role, assistant_role) = roles();
        let cfg = CamelConfig::new(user_role, assistant_role);
        let mut registry = registry(Arc::new(ScriptedBackend::constant("go on")));
        registry.insert(
            "assistant-be",
            Arc::new(ScriptedFn::new(|_: &Conversation| {
                Err(BackendError::Transport("out of tokens".to_string()))
            })),
        );
        let outcome = run_camel(&cfg, "task", &registry, "run").unwrap();
        assert_eq!(outcome.reason, TerminationReason::BackendError);
        assert!(outcome.messages >= 2);
    }
}
