//! Image captioning adapter: the same engine as multiple-choice QA with
//! captioning prompts, plus an optional external scorer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::BackendRegistry;
use crate::engine::{run_mindstorm, History, MindstormResult, MindstormTask};
use crate::metrics::{ExternalScorer, ScoreRecord};
use crate::prompt::{PromptTemplate, TemplateError};
use crate::society::SocietyConfig;

use super::TaskError;

pub const INIT_PROMPT: &str = "Describe this image in a more informative way, containing high-level reasoning like 'Where is this photo taken?', 'When is this photo taken?', 'What's the event or story behind this image?', etc";

const ORGANIZER_TEMPLATE: &str = "There is an image captioning question: <first question>. The image shows: <caption>. Based on these information, we have asked several questions before: <questions and answers>. Considering the objective of the first question, now generate another question (end by ?):";

const GATHERING_TEMPLATE: &str =
    "There is a brainstorm record: <questions and answers>. Please summarize them in a few sentences.";

const EXECUTION_TEMPLATE: &str = "There is an image captioning task: <first question>. The analysis of the image shows: <summarization>. Consider all informative information. Now organize a frequent and logical description for this image.";

/// A captioning instance over an opaque image handle. The scorer is
/// optional; its absence disables scoring, not the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionTask {
    pub image_ref: String,
}

struct CaptionMindstorm {
    organizer: PromptTemplate,
    gathering: PromptTemplate,
    execution: PromptTemplate,
}

impl CaptionMindstorm {
    fn bindings(&self, history: &History) -> BTreeMap<String, String> {
        // the "image shows" line comes from the agents' own initialization
        // descriptions
        let caption = history
            .init_answers
            .iter()
            .map(|(_, text)| text.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        let mut b = BTreeMap::new();
        b.insert("first question".to_string(), INIT_PROMPT.to_string());
        b.insert("caption".to_string(), caption);
        b.insert("questions and answers".to_string(), history.qa_block());
        b
    }
}

impl MindstormTask for CaptionMindstorm {
    fn init_prompt(&self) -> String {
        INIT_PROMPT.to_string()
    }

    fn organizer_prompt(&self, history: &History) -> Result<String, TemplateError> {
        self.organizer.render(&self.bindings(history))
    }

    fn gathering_prompt(&self, history: &History) -> Result<String, TemplateError> {
        self.gathering.render(&self.bindings(history))
    }

    fn execution_prompt(&self, summary: &str) -> Result<String, TemplateError> {
        let mut b = BTreeMap::new();
        b.insert("first question".to_string(), INIT_PROMPT.to_string());
        b.insert("summarization".to_string(), summary.to_string());
        self.execution.render(&b)
    }
}

#[derive(Debug)]
pub struct CaptionOutcome {
    pub result: MindstormResult,
    pub caption: String,
    /// Present only when a scorer was supplied and succeeded.
    pub score: Option<ScoreRecord>,
}

/// Runs the captioning protocol; scorer failures degrade to an unscored
/// result.
pub fn run_caption(
    cfg: &SocietyConfig,
    task: &CaptionTask,
    registry: &BackendRegistry,
    scorer: Option<&dyn ExternalScorer>,
    run_id: &str,
) -> Result<CaptionOutcome, TaskError> {
    let adapter = CaptionMindstorm {
        organizer: PromptTemplate::new(ORGANIZER_TEMPLATE),
        gathering: PromptTemplate::new(GATHERING_TEMPLATE),
        execution: PromptTemplate::new(EXECUTION_TEMPLATE),
    };
    let result = run_mindstorm(cfg, &adapter, registry, run_id)?;
    let caption = result.final_answer.clone();
    let score = scorer.and_then(|s| {
        s.score(&caption, &task.image_ref)
            .ok()
            .map(|value| ScoreRecord {
                scorer: s.id().to_string(),
                direction: s.direction(),
                value,
            })
    });
    Ok(CaptionOutcome {
        result,
        caption,
        score,
    })
}
