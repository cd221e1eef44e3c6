//! Natural-language societies of mind.
//!
//! A society is a set of agents (each backed by a pluggable response
//! backend) arranged into an organizational structure — a monarchy with an
//! organizer and a leader, or a democracy granting answer agents rights
//! (RTK/RTC/RTE). The mindstorm engine drives any society through four
//! stages: mission initialization, task-oriented mindstorm rounds, opinion
//! gathering, and execution. Task adapters bind the engine to concrete
//! problems (multiple-choice QA, captioning, prompt synthesis, a 3D
//! refinement loop, role-playing, temporal retrieval, grid-world
//! exploration), and an economy-of-minds ledger lets reward-maximizing
//! societies pay each other under strict credit conservation.
//!
//! Every protocol is deterministic under scripted backends, and every
//! transcript is an append-only, replayable record.

pub mod backend;
pub mod config;
pub mod engine;
pub mod eom;
pub mod fanout;
pub mod gridworld;
pub mod logfmt;
pub mod message;
pub mod metrics;
pub mod prompt;
pub mod report;
pub mod retrieval;
pub mod society;
pub mod tasks;
pub mod voting;

pub use backend::{Backend, BackendError, Conversation, ScriptedBackend};
pub use engine::{run_mindstorm, MindstormResult};
pub use message::{AgentId, Message, RoleSpec, Stage, Transcript};
pub use prompt::PromptTemplate;
pub use society::{Right, SocietyConfig, Structure};
pub use voting::{parse_vote, tally, Ballot, Tally, Vote};
