//! 3D refinement loop: a designer generates a model from the prompt, three
//! critics caption fixed disjoint views of it, and the leader folds the
//! captions into a refined prompt for the next iteration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendRegistry, Conversation};
use crate::logfmt;
use crate::message::{AgentId, Message, Stage, Transcript};

use super::TaskError;

pub const DEFAULT_VIEWS: [&str; 3] = ["front", "sides", "back"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeDLoopConfig {
    /// Text-to-3D backend handle.
    pub designer_backend: String,
    /// One captioning critic per fixed view; views are disjoint.
    pub critic_backend: String,
    pub leader_backend: String,
    pub critic_views: Vec<String>,
    pub iterations: u32,
}

impl Default for ThreeDLoopConfig {
    fn default() -> Self {
        Self {
            designer_backend: "designer".to_string(),
            critic_backend: "critic".to_string(),
            leader_backend: "leader".to_string(),
            critic_views: DEFAULT_VIEWS.iter().map(|v| v.to_string()).collect(),
            iterations: 1,
        }
    }
}

/// One pass of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub prompt: String,
    /// Opaque model handle from the designer.
    pub model: String,
    /// Caption per view, in view order; a failed critic leaves an empty
    /// caption.
    pub captions: Vec<(String, String)>,
    pub next_prompt: String,
}

#[derive(Debug)]
pub struct ThreeDOutcome {
    pub final_prompt: String,
    pub iterations: Vec<IterationRecord>,
    pub transcript: Transcript,
}

fn leader_prompt(prompt: &str, captions: &[(String, String)]) -> String {
    let mut text = String::from(
        "create a 3D model based on the given. Take the following information about the 3D generation result to slowly and like a designer propose a new prompt for a better 3D generation from text, Answer with only the new prompt and be concise with it.\n",
    );
    text.push_str(&format!("Original prompt: {prompt}\n"));
    for (view, caption) in captions {
        text.push_str(&format!("View {view} caption: {caption}\n"));
    }
    text
}

/// Runs `iterations` design/critique/refine passes. A designer failure
/// aborts; a critic failure records an empty caption for its view.
pub fn run_3d_loop(
    cfg: &ThreeDLoopConfig,
    initial_prompt: &str,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<ThreeDOutcome, TaskError> {
    assert!(cfg.iterations >= 1, "iterations must be >= 1");
    {
        let mut seen = std::collections::BTreeSet::new();
        if !cfg.critic_views.iter().all(|v| seen.insert(v)) {
            return Err(TaskError::Invalid("critic views must be disjoint".to_string()));
        }
    }
    let resolve = |name: &str| {
        registry
            .get(name)
            .ok_or_else(|| TaskError::MissingBackend(name.to_string()))
    };
    let designer_backend = resolve(&cfg.designer_backend)?;
    let critic_backend = resolve(&cfg.critic_backend)?;
    let leader_backend = resolve(&cfg.leader_backend)?;

    let designer = AgentId::new("designer", "Designer");
    let leader = AgentId::new("leader", "Leader");

    let digest = logfmt::digest_of(&(initial_prompt, &cfg.critic_views, cfg.iterations));
    let mut transcript = Transcript::new(run_id, digest);
    let push = |t: &mut Transcript,
                    sender: &AgentId,
                    to: &AgentId,
                    round: u32,
                    content: &str,
                    kind: &str|
     -> Result<(), TaskError> {
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), kind.to_string());
        t.append(Message {
            seq: t.next_seq(),
            sender: sender.clone(),
            recipients: std::iter::once(to.clone()).collect(),
            stage: Stage::Mindstorm,
            round,
            content: content.to_string(),
            meta,
        })?;
        Ok(())
    };

    let mut prompt = initial_prompt.to_string();
    let mut iterations = Vec::with_capacity(cfg.iterations as usize);
    for round in 1..=cfg.iterations {
        let model = designer_backend
            .respond(&Conversation::new("You turn text prompts into 3D models.").with_user(&prompt))
            .map_err(|source| TaskError::Backend {
                role: "designer".to_string(),
                source,
            })?;
        push(&mut transcript, &designer, &leader, round, &model, "model")?;

        let mut captions = Vec::with_capacity(cfg.critic_views.len());
        for view in &cfg.critic_views {
            let critic = AgentId::new(format!("critic-{view}"), format!("Critic ({view})"));
            let request = format!("Describe the {view} view of {model}.");
            let caption = critic_backend
                .respond(
                    &Conversation::new("You caption renders of 3D models.").with_user(&request),
                )
                .unwrap_or_default();
            push(&mut transcript, &critic, &leader, round, &caption, "view-caption")?;
            captions.push((view.clone(), caption));
        }

        let refine_request = leader_prompt(&prompt, &captions);
        let next_prompt = leader_backend
            .respond(
                &Conversation::new("You are a designer refining generation prompts.")
                    .with_user(&refine_request),
            )
            .map_err(|source| TaskError::Backend {
                role: "leader".to_string(),
                source,
            })?;
        push(&mut transcript, &leader, &designer, round, &refine_request, "refine-request")?;
        push(&mut transcript, &leader, &designer, round, &next_prompt, "next-prompt")?;

        iterations.push(IterationRecord {
            prompt: prompt.clone(),
            model,
            captions,
            next_prompt: next_prompt.clone(),
        });
        prompt = next_prompt;
    }

    Ok(ThreeDOutcome {
        final_prompt: prompt,
        iterations,
        transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ScriptedBackend, ScriptedBehavior, ScriptedFn};
    use std::sync::Arc;

    fn registry() -> BackendRegistry {
        let mut registry = BackendRegistry::new();
        registry.insert(
            "designer",
            Arc::new(ScriptedFn::new(|c: &Conversation| {
                Ok(format!("mesh[{}]", c.last_incoming().unwrap_or("")))
            })),
        );
        registry.insert(
            "critic",
            Arc::new(ScriptedBackend::new(
                ScriptedBehavior::with_default("an object")
                    .rule("front view", "a red sports car seen head-on")
                    .rule("sides view", "a red sports car in profile")
                    .rule("back view", "a red sports car with an engine behind it"),
            )),
        );
        registry.insert(
            "leader",
            Arc::new(ScriptedBackend::constant(
                "highly detailed red sports car, glossy paint, studio lighting",
            )),
        );
        registry
    }

    #[test]
    fn leader_sees_all_three_view_captions() {
        let outcome = run_3d_loop(
            &ThreeDLoopConfig::default(),
            "highly detailed red ferrari",
            &registry(),
            "run",
        )
        .unwrap();
        assert_eq!(outcome.iterations.len(), 1);
        let refine = outcome
            .transcript
            .messages()
            .iter()
            .find(|m| m.meta.get("kind").map(|k| k == "refine-request").unwrap_or(false))
            .unwrap();
        assert!(refine.content.contains("View front caption: a red sports car seen head-on"));
        assert!(refine.content.contains("View sides caption: a red sports car in profile"));
        assert!(refine
            .content
            .contains("View back caption: a red sports car with an engine behind it"));
        assert!(refine.content.contains("propose a new prompt for a better 3D generation"));
    }

    #[test]
    fn second_iteration_feeds_the_refined_prompt_back() {
        let cfg = ThreeDLoopConfig {
            iterations: 2,
            ..Default::default()
        };
        let outcome = run_3d_loop(&cfg, "flying car", &registry(), "run").unwrap();
        assert_eq!(outcome.iterations.len(), 2);
        assert_eq!(
            outcome.iterations[1].prompt,
            outcome.iterations[0].next_prompt
        );
        // the designer consumed the refined prompt verbatim
        assert_eq!(
            outcome.iterations[1].model,
            format!("mesh[{}]", outcome.iterations[0].next_prompt)
        );
    }

    #[test]
    fn invocation_counts_match_iterations() {
        for n in [1u32, 3] {
            let cfg = ThreeDLoopConfig {
                iterations: n,
                ..Default::default()
            };
            let outcome = run_3d_loop(&cfg, "robotic bee", &registry(), "run").unwrap();
            let models = outcome
                .transcript
                .messages()
                .iter()
                .filter(|m| m.meta.get("kind").map(|k| k == "model").unwrap_or(false))
                .count();
            let captions = outcome
                .transcript
                .messages()
                .iter()
                .filter(|m| m.meta.get("kind").map(|k| k == "view-caption").unwrap_or(false))
                .count();
            assert_eq!(models, n as usize);
            assert_eq!(captions, 3 * n as usize);
        }
    }

    #[test]
    fn critic_failure_leaves_empty_caption() {
        let mut reg = registry();
        reg.insert(
            "critic",
            Arc::new(ScriptedFn::new(|c: &Conversation| {
                if c.last_incoming().unwrap_or("").contains("sides") {
                    Err(BackendError::Transport("camera offline".to_string()))
                } else {
                    Ok("a caption".to_string())
                }
            })),
        );
        let outcome =
            run_3d_loop(&ThreeDLoopConfig::default(), "unicorn", &reg, "run").unwrap();
        let captions = &outcome.iterations[0].captions;
        assert_eq!(captions[1], ("sides".to_string(), String::new()));
        assert_eq!(captions[0].1, "a caption");
    }

    #[test]
    fn designer_failure_aborts() {
        let mut reg = registry();
        reg.insert(
            "designer",
            Arc::new(ScriptedFn::new(|_: &Conversation| {
                Err(BackendError::Transport("render farm down".to_string()))
            })),
        );
        let err =
            run_3d_loop(&ThreeDLoopConfig::default(), "unicorn", &reg, "run").unwrap_err();
        assert!(matches!(err, TaskError::Backend { .. }));
    }

    #[test]
    fn duplicate_views_rejected() {
        let cfg = ThreeDLoopConfig {
            critic_views: vec!["front".to_string(), "front".to_string(), "back".to_string()],
            ..Default::default()
        };
        assert!(matches!(
            run_3d_loop(&cfg, "x", &registry(), "run"),
            Err(TaskError::Invalid(_))
        ));
    }
}
