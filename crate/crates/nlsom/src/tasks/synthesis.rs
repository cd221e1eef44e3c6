//! Prompt synthesis: the questioner-answerer loop, and the hierarchical
//! artist-critic society that elects a winning prompt.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::backend::{Backend, BackendRegistry, Conversation, Speaker};
use crate::fanout;
use crate::logfmt;
use crate::message::{AgentId, Message, RoleSpec, Stage, Transcript};
use crate::voting::{tally, Ballot, Tally, VoteOption};

use super::TaskError;

/// An uncommitted message; sequence numbers are assigned at commit time so
/// parallel sub-societies merge deterministically.
#[derive(Debug, Clone)]
pub struct Draft {
    pub sender: AgentId,
    pub recipients: Vec<AgentId>,
    pub stage: Stage,
    pub round: u32,
    pub content: String,
    pub meta: BTreeMap<String, String>,
}

impl Draft {
    fn new(
        sender: &AgentId,
        recipients: Vec<AgentId>,
        stage: Stage,
        round: u32,
        content: impl Into<String>,
    ) -> Self {
        Self {
            sender: sender.clone(),
            recipients,
            stage,
            round,
            content: content.into(),
            meta: BTreeMap::new(),
        }
    }

    fn tagged(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }
}

fn commit_drafts(transcript: &mut Transcript, drafts: Vec<Draft>) -> Result<(), TaskError> {
    for d in drafts {
        let msg = Message {
            seq: transcript.next_seq(),
            sender: d.sender,
            recipients: d.recipients.into_iter().collect(),
            stage: d.stage,
            round: d.round,
            content: d.content,
            meta: d.meta,
        };
        transcript.append(msg)?;
    }
    Ok(())
}

/// Default artist styles (26 entries) shipped as a data file.
pub fn default_artist_roles() -> Vec<String> {
    include_str!("../../data/artist_roles.txt")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.to_string())
        .collect()
}

/// Default critic professions (50 entries, duplicates included as shipped).
pub fn default_critic_roles() -> Vec<String> {
    include_str!("../../data/critic_roles.txt")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.to_string())
        .collect()
}

pub struct QaLoopBackends {
    pub questioner: Arc<dyn Backend>,
    pub answerer: Arc<dyn Backend>,
    pub leader: Arc<dyn Backend>,
}

#[derive(Debug)]
pub struct QaLoopOutcome {
    /// The leader's summary: the elaborated prompt.
    pub elaborated_prompt: String,
    pub qa_pairs: Vec<(String, String)>,
    pub drafts: Vec<Draft>,
}

fn first_question(object: &str) -> String {
    format!("What should we draw to show {object}?")
}

fn qa_block(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(q, a)| format!("{q} {a}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The questioner interviews the answerer for `rounds` exchanges to refine
/// an image-generation prompt; the leader then summarizes the record into
/// the elaborated prompt. The role (an artistic style) is injected into
/// every system prompt.
pub fn run_questioner_answerer(
    object: &str,
    role: &str,
    rounds: u32,
    backends: &QaLoopBackends,
    agent_prefix: &str,
) -> Result<QaLoopOutcome, TaskError> {
    assert!(rounds >= 1, "rounds must be >= 1");
    let system = format!("You are a {role}.");
    let questioner = AgentId::new(format!("{agent_prefix}questioner"), format!("{role} Questioner"));
    let answerer = AgentId::new(format!("{agent_prefix}answerer"), format!("{role} Answerer"));
    let leader = AgentId::new(format!("{agent_prefix}leader"), format!("{role} Leader"));
    fn fail(agent_role: &'static str) -> impl Fn(crate::backend::BackendError) -> TaskError {
        move |source| TaskError::Backend {
            role: agent_role.to_string(),
            source,
        }
    }

    let mut drafts = Vec::new();
    let mut qa_pairs: Vec<(String, String)> = Vec::new();
    let mut answerer_conversation = Conversation::new(&system);

    // Mission initialization doubles as the first exchange.
    let init_prompt = format!(
        "You are a {role}. There is a Generation Problem: We want to generate an image to show {object}. What should we draw to show {object}?"
    );
    drafts.push(Draft::new(
        &questioner,
        vec![answerer.clone()],
        Stage::Init,
        0,
        &init_prompt,
    ));
    answerer_conversation.push(Speaker::User, &init_prompt);
    let first_answer = backends
        .answerer
        .respond(&answerer_conversation)
        .map_err(fail("answerer"))?;
    answerer_conversation.push(Speaker::Assistant, &first_answer);
    drafts.push(Draft::new(
        &answerer,
        vec![questioner.clone()],
        Stage::Init,
        0,
        &first_answer,
    ));
    qa_pairs.push((first_question(object), first_answer));

    // Subsequent questions come from the questioner itself.
    for round in 2..=rounds {
        let question_prompt = format!(
            "There is a Generation Problem: We want to generate an image to show {object}. Based on the information, we have asked several questions before: {}, Considering the options of the above questions and answers, now generate another question to further (end by ?)",
            qa_block(&qa_pairs)
        );
        let question = backends
            .questioner
            .respond(&Conversation::new(&system).with_user(&question_prompt))
            .map_err(fail("questioner"))?;
        drafts.push(Draft::new(
            &questioner,
            vec![answerer.clone()],
            Stage::Mindstorm,
            round - 1,
            &question,
        ));
        answerer_conversation.push(Speaker::User, &question);
        let answer = backends
            .answerer
            .respond(&answerer_conversation)
            .map_err(fail("answerer"))?;
        answerer_conversation.push(Speaker::Assistant, &answer);
        drafts.push(Draft::new(
            &answerer,
            vec![questioner.clone()],
            Stage::Mindstorm,
            round - 1,
            &answer,
        ));
        qa_pairs.push((question, answer));
    }

    // The leader condenses the record into the elaborated prompt.
    let record_prompt = format!(
        "There is a record: {} Please analyze and summarize them in a few sentences.",
        qa_block(&qa_pairs)
    );
    drafts.push(Draft::new(
        &questioner,
        vec![leader.clone()],
        Stage::Gathering,
        0,
        &record_prompt,
    ));
    let elaborated = backends
        .leader
        .respond(&Conversation::new(&system).with_user(&record_prompt))
        .map_err(fail("leader"))?;
    drafts.push(
        Draft::new(&leader, vec![questioner.clone()], Stage::Gathering, 0, &elaborated)
            .tagged("kind", "elaborated-prompt"),
    );

    Ok(QaLoopOutcome {
        elaborated_prompt: elaborated,
        qa_pairs,
        drafts,
    })
}

/// The hierarchical prompt-synthesis society: artist sub-societies produce
/// proposals, critics elect one, a collector reports it, and an optional
/// painter renders it.
#[derive(Debug, Clone)]
pub struct ArtistCriticConfig {
    pub artist_roles: Vec<String>,
    pub critic_roles: Vec<String>,
    pub rounds_per_artist: u32,
    pub collector: RoleSpec,
    /// Backend serving every artist's questioner, answerer, and leader.
    pub artist_backend: String,
    pub critic_backend: String,
    /// Optional text-to-image backend fed the winning prompt.
    pub painter_backend: Option<String>,
}

impl Default for ArtistCriticConfig {
    fn default() -> Self {
        Self {
            artist_roles: default_artist_roles(),
            critic_roles: default_critic_roles(),
            rounds_per_artist: 2,
            collector: RoleSpec::new("Assistant", "You are a Assistant.", "collector"),
            artist_backend: "artist".to_string(),
            critic_backend: "critic".to_string(),
            painter_backend: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocietyCensus {
    /// Questioners, answerers, and leaders of every artist, all critics,
    /// and the collector.
    pub language_agents: usize,
    pub painters: usize,
}

#[derive(Debug)]
pub struct ArtistCriticOutcome {
    pub winning_prompt: String,
    pub winner: String,
    pub tally: Tally,
    pub proposals: Vec<(String, String)>,
    pub transcript: Transcript,
    pub census: SocietyCensus,
    pub collector_report: String,
    pub painter_output: Option<String>,
}

/// Runs every artist's questioner-answerer loop (in parallel, committed in
/// declaration order), collects critic votes, and elects the winning
/// prompt by plurality.
pub fn run_artist_critic(
    cfg: &ArtistCriticConfig,
    object: &str,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<ArtistCriticOutcome, TaskError> {
    if cfg.artist_roles.is_empty() || cfg.critic_roles.is_empty() {
        return Err(TaskError::Invalid(
            "artist-critic society needs at least one artist and one critic".to_string(),
        ));
    }
    let resolve = |name: &str| {
        registry
            .get(name)
            .ok_or_else(|| TaskError::MissingBackend(name.to_string()))
    };
    let artist_backend = resolve(&cfg.artist_backend)?;
    let critic_backend = resolve(&cfg.critic_backend)?;
    let collector_backend = resolve(&cfg.collector.backend_ref)?;
    let painter_backend = cfg
        .painter_backend
        .as_ref()
        .map(|name| resolve(name))
        .transpose()?;

    let digest = logfmt::digest_of(&(
        &cfg.artist_roles,
        &cfg.critic_roles,
        cfg.rounds_per_artist,
        object,
    ));
    let mut transcript = Transcript::new(run_id, digest);

    // Artist sub-societies fan out; commit order is declaration order.
    let artist_jobs: Vec<(usize, String)> = cfg
        .artist_roles
        .iter()
        .cloned()
        .enumerate()
        .collect();
    let rounds = cfg.rounds_per_artist;
    let loops = fanout::map_maybe_parallel(artist_jobs, artist_backend.serial(), {
        let backend = artist_backend.clone();
        let object = object.to_string();
        move |(i, role)| {
            let backends = QaLoopBackends {
                questioner: backend.clone(),
                answerer: backend.clone(),
                leader: backend.clone(),
            };
            run_questioner_answerer(
                &object,
                &role,
                rounds,
                &backends,
                &format!("artist-{i:02}-"),
            )
            .map(|outcome| (role, outcome))
        }
    });

    let mut proposals: Vec<(String, String)> = Vec::new();
    for result in loops {
        let (role, outcome) = result?;
        let mut drafts = outcome.drafts;
        if let Some(last) = drafts.last_mut() {
            last.meta.insert("kind".to_string(), "proposal".to_string());
            last.meta.insert("artist".to_string(), role.clone());
        }
        commit_drafts(&mut transcript, drafts)?;
        proposals.push((role, outcome.elaborated_prompt));
    }

    // Critics vote over (artist name -> proposal) options.
    let options: Vec<VoteOption> = proposals.clone();
    let proposals_block = proposals
        .iter()
        .map(|(artist, proposal)| format!("{artist}: {proposal}"))
        .collect::<Vec<_>>()
        .join(", ");
    let collector_id = AgentId::new("collector", cfg.collector.role_name.clone());
    let critics: Vec<AgentId> = cfg
        .critic_roles
        .iter()
        .enumerate()
        .map(|(j, role)| AgentId::new(format!("critic-{j:02}"), role.clone()))
        .collect();

    let ballot_prompts: Vec<(AgentId, String, Conversation)> = critics
        .iter()
        .map(|critic| {
            let prompt = format!(
                "You are a {role}. There is a record for different proposals from different artists: {proposals_block}. Please choose the impressive and beautiful proposal. (please directly answer the name of role)",
                role = critic.name
            );
            let conversation =
                Conversation::new(format!("You are a {}.", critic.name)).with_user(&prompt);
            (critic.clone(), prompt, conversation)
        })
        .collect();
    transcript.append(Message {
        seq: transcript.next_seq(),
        sender: collector_id.clone(),
        recipients: critics.iter().cloned().collect(),
        stage: Stage::Gathering,
        round: 0,
        content: ballot_prompts
            .first()
            .map(|(_, p, _)| p.clone())
            .unwrap_or_default(),
        meta: std::iter::once(("kind".to_string(), "ballot-request".to_string())).collect(),
    })?;

    let votes = fanout::map_maybe_parallel(
        ballot_prompts,
        critic_backend.serial(),
        |(critic, _, conversation)| {
            let raw = critic_backend
                .respond(&conversation)
                .unwrap_or_else(|e| format!("[ABSTAIN] {e}"));
            (critic, raw)
        },
    );
    let mut ballots = Vec::with_capacity(votes.len());
    for (critic, raw) in votes {
        let ballot = Ballot::cast(&critic, &raw, &options);
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), "ballot".to_string());
        meta.insert(
            "parsed-vote".to_string(),
            match &ballot.parsed {
                crate::voting::Vote::Key(k) => k.clone(),
                crate::voting::Vote::Abstain => "abstain".to_string(),
            },
        );
        transcript.append(Message {
            seq: transcript.next_seq(),
            sender: critic.clone(),
            recipients: std::iter::once(collector_id.clone()).collect(),
            stage: Stage::Gathering,
            round: 0,
            content: raw,
            meta,
        })?;
        ballots.push(ballot);
    }

    let tally = tally(&ballots, &options)?;
    let winning_prompt = proposals
        .iter()
        .find(|(artist, _)| *artist == tally.winner)
        .map(|(_, proposal)| proposal.clone())
        .expect("winner is a declared option");

    // The collector summarizes the vote and reports the winner's proposal.
    let votes_block = options
        .iter()
        .map(|(artist, _)| format!("{artist}: {}", tally.counts[artist]))
        .collect::<Vec<_>>()
        .join(", ");
    let collector_prompt = format!(
        "There is a generation problem: we want to generate an image to show {object}. The art proposals are included in {proposals_block}. The Voting results are {votes_block}. Please only describe the proposal with the most votes in a few sentences."
    );
    let collector_report = collector_backend
        .respond(
            &Conversation::new(cfg.collector.system_prompt.clone()).with_user(&collector_prompt),
        )
        .map_err(|source| TaskError::Backend {
            role: "collector".to_string(),
            source,
        })?;
    transcript.append(Message {
        seq: transcript.next_seq(),
        sender: collector_id.clone(),
        recipients: std::collections::BTreeSet::new(),
        stage: Stage::Gathering,
        round: 0,
        content: collector_report.clone(),
        meta: std::iter::once(("kind".to_string(), "collector-report".to_string())).collect(),
    })?;

    // Optional painter renders the winning prompt.
    let painter_output = match painter_backend {
        Some(painter) => {
            let output = painter
                .respond(
                    &Conversation::new("You are a text-to-image painter.")
                        .with_user(&winning_prompt),
                )
                .map_err(|source| TaskError::Backend {
                    role: "painter".to_string(),
                    source,
                })?;
            transcript.append(Message {
                seq: transcript.next_seq(),
                sender: AgentId::new("painter", "Painter"),
                recipients: std::iter::once(collector_id).collect(),
                stage: Stage::Execution,
                round: 0,
                content: output.clone(),
                meta: std::iter::once(("kind".to_string(), "painter-output".to_string()))
                    .collect(),
            })?;
            Some(output)
        }
        None => None,
    };

    let census = SocietyCensus {
        language_agents: cfg.artist_roles.len() * 3 + cfg.critic_roles.len() + 1,
        painters: usize::from(cfg.painter_backend.is_some()),
    };

    Ok(ArtistCriticOutcome {
        winning_prompt,
        winner: tally.winner.clone(),
        tally,
        proposals,
        transcript,
        census,
        collector_report,
        painter_output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ScriptedBackend, ScriptedBehavior, ScriptedFn};
    use crate::message::MessageFilter;

    fn scripted_triple() -> QaLoopBackends {
        let questioner = Arc::new(ScriptedBackend::constant(
            "What colors should dominate the scene?",
        ));
        let answerer = Arc::new(ScriptedBackend::new(
            ScriptedBehavior::with_default("Warm amber tones with factory smoke.")
                .rule("What should we draw", "A bustling factory scene."),
        ));
        let leader = Arc::new(ScriptedBackend::constant(
            "A bustling factory scene. Warm amber tones with factory smoke.",
        ));
        QaLoopBackends {
            questioner,
            answerer,
            leader,
        }
    }

    #[test]
    fn minimal_loop_is_four_messages() {
        let outcome = run_questioner_answerer(
            "Historical event in 1760s in England",
            "Impressionism Artist",
            1,
            &scripted_triple(),
            "",
        )
        .unwrap();
        assert_eq!(outcome.drafts.len(), 4);
        assert_eq!(outcome.qa_pairs.len(), 1);
        assert!(!outcome.elaborated_prompt.is_empty());
    }

    #[test]
    fn summary_references_both_exchanges() {
        let outcome = run_questioner_answerer(
            "a steam engine",
            "Cubism Artist",
            2,
            &scripted_triple(),
            "",
        )
        .unwrap();
        assert_eq!(outcome.qa_pairs.len(), 2);
        // the leader's scripted synthesis quotes both answers
        assert!(outcome.elaborated_prompt.contains("factory scene"));
        assert!(outcome.elaborated_prompt.contains("amber tones"));
        assert_eq!(outcome.drafts.len(), 6);
    }

    #[test]
    fn role_lands_in_the_system_prompt() {
        let answerer = Arc::new(ScriptedFn::new(|c: &Conversation| {
            Ok(format!("system={}", c.system_prompt))
        }));
        let backends = QaLoopBackends {
            questioner: answerer.clone(),
            answerer,
            leader: Arc::new(ScriptedBackend::constant("done")),
        };
        let outcome =
            run_questioner_answerer("a vase", "Cubism Artist", 1, &backends, "").unwrap();
        assert!(outcome.qa_pairs[0].1.contains("You are a Cubism Artist."));
    }

    #[test]
    fn backend_failure_propagates() {
        let failing = Arc::new(ScriptedFn::new(|_: &Conversation| {
            Err(BackendError::Transport("gone".to_string()))
        }));
        let backends = QaLoopBackends {
            questioner: failing.clone(),
            answerer: failing.clone(),
            leader: failing,
        };
        let err = run_questioner_answerer("x", "Dada Artist", 1, &backends, "").unwrap_err();
        assert!(matches!(err, TaskError::Backend { .. }));
    }

    fn artist_registry(votes: &'static [&'static str]) -> BackendRegistry {
        let mut registry = BackendRegistry::new();
        // each artist proposes text derived from its own role, taken from
        // the system prompt
        registry.insert(
            "artist",
            Arc::new(ScriptedFn::new(|c: &Conversation| {
                let role = c
                    .system_prompt
                    .trim_start_matches("You are a ")
                    .trim_end_matches('.');
                let incoming = c.last_incoming().unwrap_or("");
                if incoming.contains("Please analyze and summarize") {
                    Ok(format!("{role} proposal: render it in the {role} manner"))
                } else if incoming.contains("What should we draw") {
                    Ok(format!("sketch it as a {role} would"))
                } else {
                    Ok("add more texture".to_string())
                }
            })),
        );
        // critics vote in a fixed rotation over the scripted list
        registry.insert(
            "critic",
            Arc::new(ScriptedFn::new(move |c: &Conversation| {
                let role = c.system_prompt.clone();
                let index = role.bytes().map(|b| b as usize).sum::<usize>();
                Ok(votes[index % votes.len()].to_string())
            })),
        );
        registry.insert("collector", Arc::new(ScriptedBackend::constant(
            "The winning proposal renders the subject in the leading style.",
        )));
        registry.insert("painter", Arc::new(ScriptedBackend::constant("image-handle-001")));
        registry
    }

    #[test]
    fn three_artists_five_critics_plurality() {
        let cfg = ArtistCriticConfig {
            artist_roles: vec![
                "Impressionism Artist".to_string(),
                "Cubism Artist".to_string(),
                "Dada Artist".to_string(),
            ],
            critic_roles: vec![
                "Doctor".to_string(),
                "Lawyer".to_string(),
                "Engineer".to_string(),
                "Chef".to_string(),
                "Nurse".to_string(),
            ],
            rounds_per_artist: 1,
            ..Default::default()
        };
        // every critic names the Impressionism Artist except one
        let mut registry = BackendRegistry::new();
        registry.insert(
            "artist",
            artist_registry(&[]).get("artist").unwrap(),
        );
        registry.insert(
            "critic",
            Arc::new(ScriptedFn::new(|c: &Conversation| {
                if c.system_prompt.contains("Chef") {
                    Ok("Cubism Artist".to_string())
                } else {
                    Ok("Impressionism Artist".to_string())
                }
            })),
        );
        registry.insert("collector", Arc::new(ScriptedBackend::constant("report")));
        let outcome = run_artist_critic(&cfg, "a steam engine", &registry, "run").unwrap();
        assert_eq!(outcome.winner, "Impressionism Artist");
        assert_eq!(outcome.tally.counts["Impressionism Artist"], 4);
        assert_eq!(outcome.tally.counts["Cubism Artist"], 1);
        assert!(!outcome.tally.tie_broken);
        assert!(outcome.winning_prompt.contains("Impressionism Artist"));
    }

    #[test]
    fn default_census_is_129_language_agents() {
        let cfg = ArtistCriticConfig {
            rounds_per_artist: 1,
            painter_backend: Some("painter".to_string()),
            ..Default::default()
        };
        let registry = artist_registry(&[
            "Impressionism Artist",
            "Cubism Artist",
            "Dada Artist",
            "Pure Photographer",
        ]);
        let outcome = run_artist_critic(&cfg, "a harbor at dawn", &registry, "run").unwrap();
        assert_eq!(outcome.census.language_agents, 129);
        assert_eq!(outcome.census.painters, 1);
        let proposals = outcome
            .transcript
            .query(&MessageFilter::default())
            .iter()
            .filter(|m| m.meta.get("kind").map(|k| k == "proposal").unwrap_or(false))
            .count();
        let ballots = outcome
            .transcript
            .query(&MessageFilter::default())
            .iter()
            .filter(|m| m.meta.get("kind").map(|k| k == "ballot").unwrap_or(false))
            .count();
        assert_eq!(proposals, 26);
        assert_eq!(ballots, 50);
        assert!(outcome.painter_output.is_some());
    }

    #[test]
    fn tie_breaks_by_declaration_order() {
        let cfg = ArtistCriticConfig {
            artist_roles: vec!["Cubism Artist".to_string(), "Dada Artist".to_string()],
            critic_roles: vec!["Doctor".to_string(), "Lawyer".to_string()],
            rounds_per_artist: 1,
            ..Default::default()
        };
        let mut registry = artist_registry(&[]);
        registry.insert(
            "critic",
            Arc::new(ScriptedFn::new(|c: &Conversation| {
                if c.system_prompt.contains("Doctor") {
                    Ok("Cubism Artist".to_string())
                } else {
                    Ok("Dada Artist".to_string())
                }
            })),
        );
        let outcome = run_artist_critic(&cfg, "x", &registry, "run").unwrap();
        assert_eq!(outcome.winner, "Cubism Artist");
        assert!(outcome.tally.tie_broken);
    }

    #[test]
    fn parallel_and_declared_order_match() {
        let cfg = ArtistCriticConfig {
            artist_roles: default_artist_roles(),
            critic_roles: vec!["Doctor".to_string()],
            rounds_per_artist: 1,
            ..Default::default()
        };
        let registry = artist_registry(&["Cubism Artist"]);
        let a = run_artist_critic(&cfg, "a bridge", &registry, "run").unwrap();
        let b = run_artist_critic(&cfg, "a bridge", &registry, "run").unwrap();
        assert_eq!(
            logfmt::transcript_to_log(&a.transcript),
            logfmt::transcript_to_log(&b.transcript)
        );
        let declared: Vec<String> = cfg.artist_roles.clone();
        let committed: Vec<String> = a
            .transcript
            .messages()
            .iter()
            .filter_map(|m| m.meta.get("artist").cloned())
            .collect();
        assert_eq!(committed, declared);
    }
}
