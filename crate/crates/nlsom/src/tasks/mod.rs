//! Task adapters binding the engine to concrete problems: multiple-choice
//! QA, captioning, questioner-answerer prompt synthesis with the
//! artist-critic election, the 3D refinement loop, and the role-playing
//! loop.

mod camel;
mod caption;
mod mcq;
mod synthesis;
mod threed;

pub use camel::{
    run_camel, CamelConfig, CamelOutcome, TerminationReason, DEFAULT_DONE_MARKER,
    DEFAULT_MAX_MESSAGES,
};
pub use caption::{run_caption, CaptionOutcome, CaptionTask};
pub use mcq::{run_mcq, McqOutcome, MultipleChoiceTask};
pub use synthesis::{
    default_artist_roles, default_critic_roles, run_artist_critic, run_questioner_answerer,
    ArtistCriticConfig, ArtistCriticOutcome, QaLoopBackends, QaLoopOutcome,
};
pub use threed::{run_3d_loop, IterationRecord, ThreeDLoopConfig, ThreeDOutcome};

use thiserror::Error;

use crate::backend::BackendError;
use crate::engine::EngineError;
use crate::message::TranscriptError;
use crate::prompt::TemplateError;
use crate::voting::{TallyError, VoteOption};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{role} backend failed: {source}")]
    Backend {
        role: String,
        source: BackendError,
    },
    #[error("backend {0} missing from registry")]
    MissingBackend(String),
    #[error("template error: {0}")]
    Template(#[from] TemplateError),
    #[error("transcript error: {0}")]
    Transcript(#[from] TranscriptError),
    #[error("election failed: {0}")]
    Tally(#[from] TallyError),
    #[error("{0}")]
    Invalid(String),
}

/// Renders options as the literal line embedded in prompts:
/// "(a) Nineteenth (b) Twentieth ...".
pub(crate) fn options_line(options: &[VoteOption]) -> String {
    options
        .iter()
        .map(|(key, label)| format!("({key}) {label}"))
        .collect::<Vec<_>>()
        .join(" ")
}
