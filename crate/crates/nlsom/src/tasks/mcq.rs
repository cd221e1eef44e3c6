//! Multiple-choice QA adapter (the A-OKVQA protocol).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendRegistry, Conversation};
use crate::engine::{run_mindstorm, History, MindstormResult, MindstormTask};
use crate::prompt::{PromptTemplate, TemplateError};
use crate::society::SocietyConfig;
use crate::voting::{parse_vote, Vote, VoteOption};

use super::{options_line, TaskError};

pub const INIT_PROMPT: &str = "Introduce this image in details";

const ORGANIZER_TEMPLATE: &str = "We have a multiple-choice VQA task. The question is: <vqa question> And it has four options: <option>. The caption of the image is: <caption>. Based on this information, we have previously asked several questions to other agents and obtained the following answers: <questions and answers>. Considering the options of the original question, now generate another question to help solve the original question (end by ?):";

const GATHERING_TEMPLATE: &str =
    "There is a brainstorm record: <questions and answers>. Please summarize them in a few sentences.";

const EXECUTION_TEMPLATE: &str = "There is a VQA question: <vqa question>. And It has 4 options <option> Context: <summarization>. Which one do you think is more reasonable? Answer within (a), (b), (c), (d) without explanation.";

const BALLOT_TEMPLATE: &str =
    "Question: <vqa question> Options: <options> Context: <summarization> Answer:";

/// A four-option multiple-choice question about an image handle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipleChoiceTask {
    pub question: String,
    /// Exactly four (key, label) options, keys a–d.
    pub options: Vec<VoteOption>,
    /// Backend producing the initial caption text for the organizer.
    pub context_provider: String,
    /// Ground truth key, when known (scoring only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl MultipleChoiceTask {
    fn validate(&self) -> Result<(), TaskError> {
        if self.options.len() != 4 {
            return Err(TaskError::Invalid(format!(
                "multiple-choice tasks need exactly 4 options, got {}",
                self.options.len()
            )));
        }
        Ok(())
    }
}

struct VqaMindstorm {
    question: String,
    options: Vec<VoteOption>,
    caption: String,
    organizer: PromptTemplate,
    gathering: PromptTemplate,
    execution: PromptTemplate,
    ballot: PromptTemplate,
}

impl VqaMindstorm {
    fn bindings(&self, history: &History) -> BTreeMap<String, String> {
        let mut b = BTreeMap::new();
        b.insert("vqa question".to_string(), self.question.clone());
        b.insert("option".to_string(), options_line(&self.options));
        b.insert("options".to_string(), options_line(&self.options));
        b.insert("caption".to_string(), self.caption.clone());
        b.insert("questions and answers".to_string(), history.qa_block());
        b
    }
}

impl MindstormTask for VqaMindstorm {
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
        let mut b = self.bindings(&History::default());
        b.insert("summarization".to_string(), summary.to_string());
        self.execution.render(&b)
    }

    fn ballot_prompt(&self, summary: &str) -> Result<String, TemplateError> {
        let mut b = self.bindings(&History::default());
        b.insert("summarization".to_string(), summary.to_string());
        self.ballot.render(&b)
    }

    fn vote_options(&self) -> Option<Vec<VoteOption>> {
        Some(self.options.clone())
    }
}

#[derive(Debug)]
pub struct McqOutcome {
    pub result: MindstormResult,
    /// The final answer parsed against the options; an unparseable answer
    /// abstains and scores incorrect.
    pub chosen: Vote,
    pub caption: String,
}

/// Runs the multiple-choice protocol over the society.
pub fn run_mcq(
    cfg: &SocietyConfig,
    task: &MultipleChoiceTask,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<McqOutcome, TaskError> {
    task.validate()?;
    let caption = fetch_caption(task, registry);
    let adapter = VqaMindstorm {
        question: task.question.clone(),
        options: task.options.clone(),
        caption: caption.clone(),
        organizer: PromptTemplate::new(ORGANIZER_TEMPLATE),
        gathering: PromptTemplate::new(GATHERING_TEMPLATE),
        execution: PromptTemplate::new(EXECUTION_TEMPLATE),
        ballot: PromptTemplate::new(BALLOT_TEMPLATE),
    };
    let result = run_mindstorm(cfg, &adapter, registry, run_id)?;
    let chosen = parse_vote(&result.final_answer, &task.options);
    Ok(McqOutcome {
        result,
        chosen,
        caption,
    })
}

/// The context provider supplies the organizer's caption; failures degrade
/// to an empty caption rather than aborting the run.
fn fetch_caption(task: &MultipleChoiceTask, registry: &BackendRegistry) -> String {
    let Some(provider) = registry.get(&task.context_provider) else {
        return String::new();
    };
    let conversation = Conversation::new("You describe images.").with_user(INIT_PROMPT);
    provider.respond(&conversation).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, ScriptedBehavior};
    use crate::message::{AgentId, RoleSpec, Stage};
    use crate::metrics::mcq_accuracy;
    use crate::society::{Right, Structure, TaskBinding};
    use std::sync::Arc;

    fn agent(id: &str) -> AgentId {
        AgentId::new(id, id)
    }

    fn abcd() -> Vec<VoteOption> {
        vec![
            ("a".to_string(), "Nineteenth".to_string()),
            ("b".to_string(), "Twentieth".to_string()),
            ("c".to_string(), "Eighteenth".to_string()),
            ("d".to_string(), "Twenty-first".to_string()),
        ]
    }

    fn suitcase_task() -> MultipleChoiceTask {
        MultipleChoiceTask {
            question: "What century were these invented in?".to_string(),
            options: abcd(),
            context_provider: "ctx".to_string(),
            answer: Some("b".to_string()),
        }
    }

    fn society(structure: Structure, rounds: u32) -> SocietyConfig {
        let members = vec![
            (agent("organizer"), RoleSpec::new("Organizer", "You organize.", "organizer-be")),
            (agent("leader"), RoleSpec::new("Leader", "You decide.", "leader-be")),
            (agent("blip2"), RoleSpec::new("VQA Agent", "You answer about images.", "blip2-be")),
            (agent("ofa"), RoleSpec::new("VQA Agent", "You answer about images.", "ofa-be")),
            (agent("mplug"), RoleSpec::new("VQA Agent", "You answer about images.", "mplug-be")),
        ];
        SocietyConfig {
            members,
            structure,
            rounds,
            task_binding: TaskBinding {
                adapter: "mcq".to_string(),
                params: Default::default(),
            },
            allow_dual_chair: false,
        }
    }

    fn monarchy(rounds: u32) -> SocietyConfig {
        society(
            Structure::Monarchy {
                leader: agent("leader"),
                organizer: agent("organizer"),
            },
            rounds,
        )
    }

    fn base_registry() -> BackendRegistry {
        let mut registry = BackendRegistry::new();
        registry.insert(
            "ctx",
            Arc::new(ScriptedBackend::constant("A plane is on the runway at an airport.")),
        );
        registry.insert(
            "organizer-be",
            Arc::new(ScriptedBackend::new(
                ScriptedBehavior::with_default("What is the style of this plane?")
                    .rule("brainstorm record", "The invention of jet airplanes dates back to the 20th century."),
            )),
        );
        registry.insert(
            "leader-be",
            Arc::new(ScriptedBackend::new(
                ScriptedBehavior::with_default("(b) Twentieth"),
            )),
        );
        for (name, answer) in [
            ("blip2-be", "a jet airplane"),
            ("ofa-be", "a united airlines plane"),
            ("mplug-be", "1903"),
        ] {
            registry.insert(name, Arc::new(ScriptedBackend::constant(answer)));
        }
        registry
    }

    #[test]
    fn walkthrough_shape_and_answer() {
        let outcome = run_mcq(&monarchy(2), &suitcase_task(), &base_registry(), "run").unwrap();
        assert_eq!(outcome.chosen, Vote::Key("b".to_string()));
        // organizer asked at least one sub-question
        let questions: Vec<_> = outcome
            .result
            .transcript
            .messages()
            .iter()
            .filter(|m| m.stage == Stage::Mindstorm && m.sender == agent("organizer"))
            .collect();
        assert_eq!(questions.len(), 2);
        assert!(questions[0].content.ends_with('?'));
        // summary feeds the leader's execution prompt
        let execution_request = outcome
            .result
            .transcript
            .messages()
            .iter()
            .find(|m| m.stage == Stage::Execution)
            .unwrap();
        assert!(execution_request
            .content
            .contains("Which one do you think is more reasonable?"));
        assert!(execution_request.content.contains(&outcome.result.summary));
        assert_eq!(outcome.caption, "A plane is on the runway at an airport.");
    }

    #[test]
    fn unanimous_correct_agents_score_perfectly() {
        let mut registry = base_registry();
        for name in ["blip2-be", "ofa-be", "mplug-be"] {
            registry.insert(name, Arc::new(ScriptedBackend::constant("Twentieth")));
        }
        // copy-through leader answers with the majority option
        registry.insert("leader-be", Arc::new(ScriptedBackend::constant("(b)")));
        let cfg = monarchy(1);
        let mut results = Vec::new();
        for i in 0..4 {
            let outcome =
                run_mcq(&cfg, &suitcase_task(), &registry, &format!("run-{i}")).unwrap();
            results.push((outcome.chosen, "b".to_string()));
        }
        assert_eq!(mcq_accuracy(&results).unwrap(), 1.0);
    }

    #[test]
    fn unparseable_final_answer_abstains() {
        let mut registry = base_registry();
        registry.insert(
            "leader-be",
            Arc::new(ScriptedBackend::constant("hard to say, could be either (a) or (b)")),
        );
        let outcome = run_mcq(&monarchy(1), &suitcase_task(), &registry, "run").unwrap();
        assert_eq!(outcome.chosen, Vote::Abstain);
        let scored = mcq_accuracy(&[(outcome.chosen, "b".to_string())]).unwrap();
        assert_eq!(scored, 0.0);
    }

    #[test]
    fn rtc_keep_own_answer_leaves_record_unchanged() {
        let mut registry = base_registry();
        // blip2 answers "jet airplane" and keeps it at re-choice time
        registry.insert(
            "blip2-be",
            Arc::new(ScriptedBackend::new(
                ScriptedBehavior::with_default("jet airplane").rule("Options: (a)", "(a)"),
            )),
        );
        for name in ["ofa-be", "mplug-be"] {
            registry.insert(
                name,
                Arc::new(ScriptedBackend::new(
                    ScriptedBehavior::with_default("united airlines plane")
                        .rule("Options: (a)", "(a)"),
                )),
            );
        }
        let cfg = society(
            Structure::Democracy {
                rights: [Right::Rtk, Right::Rtc].into_iter().collect(),
            },
            1,
        );
        let outcome = run_mcq(&cfg, &suitcase_task(), &registry, "run").unwrap();
        let rtc_choices: Vec<_> = outcome
            .result
            .transcript
            .messages()
            .iter()
            .filter(|m| m.meta.get("kind").map(|k| k == "rtc-choice").unwrap_or(false))
            .collect();
        assert_eq!(rtc_choices.len(), 3);
        let blip2_choice = rtc_choices
            .iter()
            .find(|m| m.sender == agent("blip2"))
            .unwrap();
        assert_eq!(blip2_choice.content, "jet airplane");
    }

    #[test]
    fn rte_election_decides_final_answer() {
        let mut registry = base_registry();
        for (name, vote) in [("blip2-be", "(b)"), ("ofa-be", "(b)"), ("mplug-be", "(c)")] {
            registry.insert(
                name,
                Arc::new(ScriptedBackend::new(
                    ScriptedBehavior::with_default("an airplane").rule("Context:", vote),
                )),
            );
        }
        let cfg = society(
            Structure::Democracy {
                rights: [Right::Rtk, Right::Rtc, Right::Rte].into_iter().collect(),
            },
            1,
        );
        let outcome = run_mcq(&cfg, &suitcase_task(), &registry, "run").unwrap();
        assert_eq!(outcome.chosen, Vote::Key("b".to_string()));
        let tally = outcome.result.tally.unwrap();
        assert_eq!(tally.counts["b"], 2);
    }

    #[test]
    fn five_options_rejected() {
        let mut task = suitcase_task();
        task.options.push(("e".to_string(), "Fifth".to_string()));
        let err = run_mcq(&monarchy(1), &task, &base_registry(), "run").unwrap_err();
        assert!(matches!(err, TaskError::Invalid(_)));
    }
}
