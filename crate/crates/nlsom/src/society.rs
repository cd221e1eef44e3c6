//! Society composition: members, organizational structure, and the
//! democratic rights RTK/RTC/RTE enforced through visibility filtering.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendRegistry;
use crate::message::{AgentId, Message, RoleSpec, Stage, Transcript};

/// Rights an answer agent may hold in a democracy. Rights are cumulative
/// flags: configurations are typically base, +RTK, +RTK+RTC, +RTK+RTC+RTE,
/// with the full set labeled "democratic".
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Right {
    /// Right to know: see all other answer agents' previous-round answers.
    Rtk,
    /// Right to change: re-choose one's answer among the peers' answers
    /// before opinion gathering.
    Rtc,
    /// Right to execute: vote on the final answer instead of the leader.
    Rte,
}

/// How the society is organized.
///
/// The organizer is retained even under full democracy: it still generates
/// sub-questions and summaries. The leader requests the summary and, absent
/// RTE, authors the final answer; under a democracy both roles are located
/// by their `role_name` ("Organizer" / "Leader", case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Structure {
    Monarchy { leader: AgentId, organizer: AgentId },
    Democracy { rights: BTreeSet<Right> },
}

impl Structure {
    pub fn rights(&self) -> BTreeSet<Right> {
        match self {
            Structure::Monarchy { .. } => BTreeSet::new(),
            Structure::Democracy { rights } => rights.clone(),
        }
    }

    pub fn has_right(&self, right: Right) -> bool {
        matches!(self, Structure::Democracy { rights } if rights.contains(&right))
    }
}

pub const DEFAULT_ROUNDS: u32 = 10;

/// Task binding: which adapter drives the run, with adapter parameters left
/// to the config layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBinding {
    pub adapter: String,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, String>,
}

/// A complete society definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocietyConfig {
    pub members: Vec<(AgentId, RoleSpec)>,
    pub structure: Structure,
    pub rounds: u32,
    pub task_binding: TaskBinding,
    /// Permit one agent to hold both the leader and organizer chairs
    /// (minimal societies).
    #[serde(default)]
    pub allow_dual_chair: bool,
}

impl SocietyConfig {
    pub fn role_of(&self, agent: &AgentId) -> Option<&RoleSpec> {
        self.members
            .iter()
            .find(|(id, _)| id == agent)
            .map(|(_, role)| role)
    }

    fn member_with_role_name(&self, role_name: &str) -> Option<&AgentId> {
        self.members
            .iter()
            .find(|(_, role)| role.role_name.eq_ignore_ascii_case(role_name))
            .map(|(id, _)| id)
    }

    /// The sub-question generator and summarizer.
    pub fn organizer(&self) -> Option<&AgentId> {
        match &self.structure {
            Structure::Monarchy { organizer, .. } => Some(organizer),
            Structure::Democracy { .. } => self.member_with_role_name("Organizer"),
        }
    }

    /// The final decider (absent only in leaderless RTE democracies).
    pub fn leader(&self) -> Option<&AgentId> {
        match &self.structure {
            Structure::Monarchy { leader, .. } => Some(leader),
            Structure::Democracy { .. } => self.member_with_role_name("Leader"),
        }
    }

    /// Members that answer sub-questions (and vote, under RTE), in
    /// declaration order.
    pub fn answer_agents(&self) -> Vec<&AgentId> {
        let organizer = self.organizer();
        let leader = self.leader();
        self.members
            .iter()
            .map(|(id, _)| id)
            .filter(|id| Some(*id) != organizer && Some(*id) != leader)
            .collect()
    }

    pub fn is_coordinator(&self, agent: &AgentId) -> bool {
        Some(agent) == self.organizer() || Some(agent) == self.leader()
    }

    pub fn contains(&self, agent: &AgentId) -> bool {
        self.members.iter().any(|(id, _)| id == agent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("duplicate agent id: {0}")]
    DuplicateAgent(String),
    #[error("agent {agent}: backend \"{backend_ref}\" not in registry")]
    UnresolvableBackend { agent: String, backend_ref: String },
    #[error("agent {0} has an empty role name")]
    EmptyRoleName(String),
    #[error("structure names missing member: {0}")]
    MissingChair(String),
    #[error("leader and organizer are the same agent but dual chairs are not allowed")]
    SharedChairNotAllowed,
    #[error("democracy has no member with role name \"Organizer\"")]
    NoOrganizerRole,
    #[error("democracy without RTE has no member with role name \"Leader\"")]
    NoLeaderRole,
    #[error("RTE democracy has zero voting agents")]
    NoVoters,
    #[error("rounds must be >= 1")]
    ZeroRounds,
}

/// Returns every violation, not just the first.
pub fn validate_society(cfg: &SocietyConfig, registry: &BackendRegistry) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for (id, role) in &cfg.members {
        if !seen.insert(&id.id) {
            violations.push(Violation::DuplicateAgent(id.id.clone()));
        }
        if role.role_name.trim().is_empty() {
            violations.push(Violation::EmptyRoleName(id.id.clone()));
        }
        if !registry.contains(&role.backend_ref) {
            violations.push(Violation::UnresolvableBackend {
                agent: id.id.clone(),
                backend_ref: role.backend_ref.clone(),
            });
        }
    }
    if cfg.rounds < 1 {
        violations.push(Violation::ZeroRounds);
    }
    match &cfg.structure {
        Structure::Monarchy { leader, organizer } => {
            for chair in [leader, organizer] {
                if !cfg.contains(chair) {
                    violations.push(Violation::MissingChair(chair.id.clone()));
                }
            }
            if leader == organizer && !cfg.allow_dual_chair {
                violations.push(Violation::SharedChairNotAllowed);
            }
        }
        Structure::Democracy { rights } => {
            if cfg.organizer().is_none() {
                violations.push(Violation::NoOrganizerRole);
            }
            if !rights.contains(&Right::Rte) && cfg.leader().is_none() {
                violations.push(Violation::NoLeaderRole);
            }
            if rights.contains(&Right::Rte) && cfg.answer_agents().is_empty() {
                violations.push(Violation::NoVoters);
            }
        }
    }
    violations
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VisibilityError {
    #[error("unknown agent: {0}")]
    UnknownAgent(String),
}

/// What `agent` may see of the transcript at the given protocol point.
///
/// Coordinators (organizer, leader) always see the full transcript. An
/// answer agent sees messages addressed to it plus its own; with RTK it
/// additionally sees the other answer agents' mindstorm answers from the
/// previous round (at round 1 there is no previous round and the view
/// equals the no-RTK view).
pub fn visible_context<'t>(
    agent: &AgentId,
    transcript: &'t Transcript,
    cfg: &SocietyConfig,
    stage: Stage,
    round: u32,
) -> Result<Vec<&'t Message>, VisibilityError> {
    if !cfg.contains(agent) {
        return Err(VisibilityError::UnknownAgent(agent.id.clone()));
    }
    if cfg.is_coordinator(agent) {
        return Ok(transcript.messages().iter().collect());
    }
    let rtk = cfg.structure.has_right(Right::Rtk);
    let answer_agents: BTreeSet<&AgentId> = cfg.answer_agents().into_iter().collect();
    let previous_round = if stage == Stage::Mindstorm && round >= 2 {
        Some(round - 1)
    } else {
        None
    };
    Ok(transcript
        .messages()
        .iter()
        .filter(|m| {
            if m.sender == *agent || m.addressed_to(agent) {
                return true;
            }
            if rtk {
                if let Some(prev) = previous_round {
                    return m.stage == Stage::Mindstorm
                        && m.round == prev
                        && answer_agents.contains(&m.sender);
                }
            }
            false
        })
        .collect())
}
