//! The four-stage mindstorm protocol.
//!
//! Mission initialization broadcasts the task to every answer agent; the
//! task-oriented mindstorm runs R rounds of organizer sub-questions and
//! agent answers; opinion gathering has the organizer summarize the record;
//! execution produces the final answer — authored by the leader, or, when
//! the society grants RTE, elected by ballot.
//!
//! Answer agents within a round are queried concurrently but committed to
//! the transcript in member-declaration order, so transcripts are
//! deterministic regardless of completion order.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendRegistry, Conversation, Speaker};
use crate::fanout;
use crate::logfmt;
use crate::message::{message, AgentId, Message, Stage, Transcript, TranscriptError};
use crate::prompt::TemplateError;
use crate::society::{validate_society, Right, SocietyConfig, Violation};
use crate::voting::{parse_vote, tally, Ballot, Tally, Vote, VoteOption};

/// Content recorded when an answer agent cannot answer; summaries include
/// it verbatim so the organizer can discount it.
pub const ABSTAIN_CONTENT: &str = "[ABSTAIN]";

/// Where the protocol currently stands; transitions only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StagePoint {
    Init,
    Mindstorm(u32),
    Gathering,
    Execution,
    Done,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolCorruption {
    #[error("agent {0} completed but was not pending")]
    NotPending(String),
    #[error("cannot load pending agents: {0} still outstanding")]
    PendingOutstanding(String),
}

/// Pending-set bookkeeping for one run.
#[derive(Debug, Clone)]
pub struct MindstormState {
    pub stage: StagePoint,
    pending: BTreeSet<AgentId>,
    total_rounds: u32,
}

impl MindstormState {
    pub fn new(total_rounds: u32) -> Self {
        Self {
            stage: StagePoint::Init,
            pending: BTreeSet::new(),
            total_rounds,
        }
    }

    pub fn pending(&self) -> &BTreeSet<AgentId> {
        &self.pending
    }

    /// Declares the agents awaited at the current step. The previous step
    /// must have drained.
    pub fn load_pending(
        &mut self,
        agents: impl IntoIterator<Item = AgentId>,
    ) -> Result<(), ProtocolCorruption> {
        if let Some(stale) = self.pending.iter().next() {
            return Err(ProtocolCorruption::PendingOutstanding(stale.id.clone()));
        }
        self.pending = agents.into_iter().collect();
        Ok(())
    }
}

/// Marks `completed` as done; when the pending set drains, the stage
/// advances to the next round or stage.
pub fn advance_stage(
    state: &mut MindstormState,
    completed: &AgentId,
) -> Result<(), ProtocolCorruption> {
    if !state.pending.remove(completed) {
        return Err(ProtocolCorruption::NotPending(completed.id.clone()));
    }
    if state.pending.is_empty() {
        state.stage = match state.stage {
            StagePoint::Init => StagePoint::Mindstorm(1),
            StagePoint::Mindstorm(r) if r < state.total_rounds => StagePoint::Mindstorm(r + 1),
            StagePoint::Mindstorm(_) => StagePoint::Gathering,
            StagePoint::Gathering => StagePoint::Execution,
            StagePoint::Execution | StagePoint::Done => StagePoint::Done,
        };
    }
    Ok(())
}

/// One mindstorm round: the sub-question and every agent's answer.
#[derive(Debug, Clone)]
pub struct QaPair {
    pub question: String,
    pub answers: Vec<(AgentId, String)>,
}

/// Typed view of the run so far; task adapters render prompt bindings
/// from it.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub init_prompt: String,
    pub init_answers: Vec<(AgentId, String)>,
    pub qa_rounds: Vec<QaPair>,
}

impl History {
    /// The brainstorm record: every sub-question with every answer, in
    /// order. Abstentions appear verbatim.
    pub fn qa_block(&self) -> String {
        let mut out = String::new();
        for (i, qa) in self.qa_rounds.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("Q{}: {}", i + 1, qa.question));
            for (agent, answer) in &qa.answers {
                out.push_str(&format!(" A{} ({}): {}.", i + 1, agent.name, answer));
            }
        }
        out
    }
}

/// A task adapter: supplies the prompts that specialize the four stages.
pub trait MindstormTask {
    fn init_prompt(&self) -> String;

    /// Prompt from which the organizer generates the round's sub-question;
    /// conditioned on the full history via its bindings.
    fn organizer_prompt(&self, history: &History) -> Result<String, TemplateError>;

    fn gathering_prompt(&self, history: &History) -> Result<String, TemplateError>;

    /// Prompt the leader answers at execution.
    fn execution_prompt(&self, summary: &str) -> Result<String, TemplateError>;

    /// Prompt each voting agent answers under RTE. Defaults to the
    /// execution prompt.
    fn ballot_prompt(&self, summary: &str) -> Result<String, TemplateError> {
        self.execution_prompt(summary)
    }

    /// Options RTE ballots are parsed against; tasks without a discrete
    /// answer space cannot run under RTE.
    fn vote_options(&self) -> Option<Vec<VoteOption>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MindstormResult {
    pub transcript: Transcript,
    pub summary: String,
    pub final_answer: String,
    pub per_stage_counts: BTreeMap<String, usize>,
    /// Present when execution was decided by ballot.
    pub tally: Option<Tally>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("society config invalid: {0:?}")]
    Validation(Vec<Violation>),
    #[error("{role} backend failed: {source}")]
    Coordinator {
        role: &'static str,
        source: BackendError,
        /// Diagnostic transcript up to the failure.
        transcript: Box<Transcript>,
    },
    #[error("RTE election had no quorum: every voter abstained")]
    NoQuorum { transcript: Box<Transcript> },
    #[error("RTE requires a task with vote options")]
    MissingVoteOptions,
    #[error("template error: {0}")]
    Template(#[from] TemplateError),
    #[error("transcript error: {0}")]
    Transcript(#[from] TranscriptError),
    #[error("protocol corruption: {0}")]
    Corruption(#[from] ProtocolCorruption),
    #[error("society has no organizer")]
    NoOrganizer,
    #[error("society has no leader and no RTE right")]
    NoLeader,
}

struct Engine<'a> {
    cfg: &'a SocietyConfig,
    registry: &'a BackendRegistry,
    transcript: Transcript,
    state: MindstormState,
    history: History,
}

impl<'a> Engine<'a> {
    fn backend(&self, agent: &AgentId) -> Arc<dyn Backend> {
        let role = self.cfg.role_of(agent).expect("validated member");
        self.registry
            .get(&role.backend_ref)
            .expect("validated backend ref")
    }

    fn system_prompt(&self, agent: &AgentId) -> String {
        self.cfg
            .role_of(agent)
            .map(|r| r.system_prompt.clone())
            .expect("validated member")
    }

    fn commit(&mut self, msg: Message) -> Result<(), EngineError> {
        self.transcript.append(msg)?;
        Ok(())
    }

    /// Queries one coordinator (organizer or leader) with a single-turn
    /// conversation; failures abort the run with the transcript so far.
    fn coordinator_turn(
        &mut self,
        role: &'static str,
        agent: &AgentId,
        prompt_text: &str,
    ) -> Result<String, EngineError> {
        let conversation = Conversation::new(self.system_prompt(agent)).with_user(prompt_text);
        match self.backend(agent).respond(&conversation) {
            Ok(text) => Ok(text),
            Err(source) => Err(EngineError::Coordinator {
                role,
                source,
                transcript: Box::new(self.transcript.clone()),
            }),
        }
    }

    /// Fans one prompt out to the given agents (parallel unless any backend
    /// is serial) and returns per-agent outcomes in declaration order.
    fn fan_out(
        &self,
        agents: &[AgentId],
        conversations: Vec<Conversation>,
    ) -> Vec<Result<String, BackendError>> {
        let backends: Vec<Arc<dyn Backend>> = agents.iter().map(|a| self.backend(a)).collect();
        let any_serial = backends.iter().any(|b| b.serial());
        let work: Vec<(Arc<dyn Backend>, Conversation)> =
            backends.into_iter().zip(conversations).collect();
        fanout::map_maybe_parallel(work, any_serial, |(backend, conversation)| {
            backend.respond(&conversation)
        })
    }

    /// Commits an answer-agent outcome; failures become abstentions and the
    /// protocol continues.
    fn commit_answer(
        &mut self,
        agent: &AgentId,
        recipients: Vec<AgentId>,
        stage: Stage,
        round: u32,
        outcome: Result<String, BackendError>,
    ) -> Result<String, EngineError> {
        let mut msg = message(
            self.transcript.next_seq(),
            agent,
            recipients,
            stage,
            round,
            "",
        );
        let text = match outcome {
            Ok(text) => {
                msg.content = text.clone();
                text
            }
            Err(err) => {
                msg.content = ABSTAIN_CONTENT.to_string();
                let kind = match err {
                    BackendError::Refusal(_) => "refusal",
                    _ => "backend-error",
                };
                msg.meta.insert("kind".to_string(), kind.to_string());
                msg.meta.insert("detail".to_string(), err.to_string());
                ABSTAIN_CONTENT.to_string()
            }
        };
        self.commit(msg)?;
        Ok(text)
    }

    /// Conversation an answer agent sees when asked the round-`round`
    /// question: its own exchanges so far, then the question — prefixed,
    /// under RTK from round 2 on, with every agent's previous-round answer.
    fn answer_agent_conversation(
        &self,
        agent: &AgentId,
        question: &str,
        round: u32,
    ) -> Conversation {
        let mut c = Conversation::new(self.system_prompt(agent));
        c.push(Speaker::User, &self.history.init_prompt);
        if let Some((_, own)) = self.history.init_answers.iter().find(|(a, _)| a == agent) {
            c.push(Speaker::Assistant, own);
        }
        for qa in &self.history.qa_rounds {
            c.push(Speaker::User, &qa.question);
            if let Some((_, own)) = qa.answers.iter().find(|(a, _)| a == agent) {
                c.push(Speaker::Assistant, own);
            }
        }
        let rtk = self.cfg.structure.has_right(Right::Rtk);
        let incoming = if rtk && round >= 2 {
            let prev = &self.history.qa_rounds[(round - 2) as usize];
            let mut block = format!("Context: {}", prev.question);
            for (i, (peer, answer)) in prev.answers.iter().enumerate() {
                block.push_str(&format!(" Answer{} ({}): {};", i + 1, peer.name, answer));
            }
            block.push_str(&format!(" Question: {question} Answer:"));
            block
        } else {
            question.to_string()
        };
        c.push(Speaker::User, incoming);
        c
    }
}

/// Runs the task's mindstorm over the society. The transcript commits in a
/// deterministic order, so identical configs and scripted backends yield
/// byte-identical transcripts.
pub fn run_mindstorm<T: MindstormTask + ?Sized>(
    cfg: &SocietyConfig,
    task: &T,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<MindstormResult, EngineError> {
    let violations = validate_society(cfg, registry);
    if !violations.is_empty() {
        return Err(EngineError::Validation(violations));
    }
    let organizer = cfg.organizer().ok_or(EngineError::NoOrganizer)?.clone();
    let rte = cfg.structure.has_right(Right::Rte);
    let leader = match cfg.leader() {
        Some(leader) => Some(leader.clone()),
        None if rte => None,
        None => return Err(EngineError::NoLeader),
    };
    let answer_agents: Vec<AgentId> = cfg.answer_agents().into_iter().cloned().collect();
    let config_digest = logfmt::digest_of(cfg);

    let mut engine = Engine {
        cfg,
        registry,
        transcript: Transcript::new(run_id, config_digest),
        state: MindstormState::new(cfg.rounds),
        history: History {
            init_prompt: task.init_prompt(),
            ..History::default()
        },
    };

    // Mission initialization: broadcast, then one response per agent.
    let init_prompt = engine.history.init_prompt.clone();
    engine.commit(message(
        engine.transcript.next_seq(),
        &organizer,
        answer_agents.iter().cloned(),
        Stage::Init,
        0,
        &init_prompt,
    ))?;
    engine.state.load_pending(answer_agents.iter().cloned())?;
    let conversations: Vec<Conversation> = answer_agents
        .iter()
        .map(|a| Conversation::new(engine.system_prompt(a)).with_user(&init_prompt))
        .collect();
    let outcomes = engine.fan_out(&answer_agents, conversations);
    for (agent, outcome) in answer_agents.iter().zip(outcomes) {
        let text =
            engine.commit_answer(agent, vec![organizer.clone()], Stage::Init, 0, outcome)?;
        engine.history.init_answers.push((agent.clone(), text));
        advance_stage(&mut engine.state, agent)?;
    }
    if answer_agents.is_empty() {
        engine.state.stage = StagePoint::Mindstorm(1);
    }

    // Task-oriented mindstorm: R rounds of sub-question and answers.
    for round in 1..=cfg.rounds {
        debug_assert_eq!(engine.state.stage, StagePoint::Mindstorm(round));
        engine
            .state
            .load_pending(std::iter::once(organizer.clone()).chain(answer_agents.iter().cloned()))?;
        let organizer_prompt = task.organizer_prompt(&engine.history)?;
        let question = engine.coordinator_turn("organizer", &organizer, &organizer_prompt)?;
        engine.commit(message(
            engine.transcript.next_seq(),
            &organizer,
            answer_agents.iter().cloned(),
            Stage::Mindstorm,
            round,
            &question,
        ))?;
        advance_stage(&mut engine.state, &organizer)?;

        let conversations: Vec<Conversation> = answer_agents
            .iter()
            .map(|a| engine.answer_agent_conversation(a, &question, round))
            .collect();
        let outcomes = engine.fan_out(&answer_agents, conversations);
        let mut answers = Vec::with_capacity(answer_agents.len());
        for (agent, outcome) in answer_agents.iter().zip(outcomes) {
            let text = engine.commit_answer(
                agent,
                vec![organizer.clone()],
                Stage::Mindstorm,
                round,
                outcome,
            )?;
            answers.push((agent.clone(), text));
            advance_stage(&mut engine.state, agent)?;
        }
        engine.history.qa_rounds.push(QaPair { question, answers });
    }

    // Right to change: each agent may re-choose its answer per sub-question
    // before the record is summarized.
    if cfg.structure.has_right(Right::Rtc) && answer_agents.len() >= 2 {
        for round_idx in 0..engine.history.qa_rounds.len() {
            for agent in &answer_agents {
                let qa = engine.history.qa_rounds[round_idx].clone();
                let own = qa
                    .answers
                    .iter()
                    .find(|(a, _)| a == agent)
                    .map(|(_, t)| t.clone())
                    .unwrap_or_default();
                let peers: Vec<String> = qa
                    .answers
                    .iter()
                    .filter(|(a, _)| a != agent)
                    .map(|(_, t)| t.clone())
                    .collect();
                let backend = engine.backend(agent);
                let system_prompt = engine.system_prompt(agent);
                let choice =
                    apply_rtc(&qa.question, &own, &peers, backend.as_ref(), &system_prompt);
                let mut prompt_msg = message(
                    engine.transcript.next_seq(),
                    &organizer,
                    [agent.clone()],
                    Stage::Gathering,
                    0,
                    rtc_prompt(&qa.question, &own, &peers),
                );
                prompt_msg
                    .meta
                    .insert("kind".to_string(), "rtc-prompt".to_string());
                engine.commit(prompt_msg)?;
                let mut reply_msg = message(
                    engine.transcript.next_seq(),
                    agent,
                    [organizer.clone()],
                    Stage::Gathering,
                    0,
                    choice.chosen.clone(),
                );
                reply_msg
                    .meta
                    .insert("kind".to_string(), "rtc-choice".to_string());
                reply_msg.meta.insert("raw".to_string(), choice.raw.clone());
                if choice.ambiguous {
                    reply_msg
                        .meta
                        .insert("warning".to_string(), "ambiguous-rtc-choice".to_string());
                }
                engine.commit(reply_msg)?;
                let slot = engine.history.qa_rounds[round_idx]
                    .answers
                    .iter_mut()
                    .find(|(a, _)| a == agent);
                if let Some((_, answer)) = slot {
                    *answer = choice.chosen;
                }
            }
        }
    }

    // Opinion gathering: the leader (when present) requests the summary and
    // the organizer produces it.
    engine.state.load_pending([organizer.clone()])?;
    let gathering_prompt = task.gathering_prompt(&engine.history)?;
    let requester = leader.clone().unwrap_or_else(|| organizer.clone());
    engine.commit(message(
        engine.transcript.next_seq(),
        &requester,
        [organizer.clone()],
        Stage::Gathering,
        0,
        &gathering_prompt,
    ))?;
    let summary = engine.coordinator_turn("organizer", &organizer, &gathering_prompt)?;
    engine.commit(message(
        engine.transcript.next_seq(),
        &organizer,
        [requester.clone()],
        Stage::Gathering,
        0,
        &summary,
    ))?;
    advance_stage(&mut engine.state, &organizer)?;

    // Execution: RTE election, or the leader's verdict.
    let (final_answer, election) = if rte {
        let options = task.vote_options().ok_or(EngineError::MissingVoteOptions)?;
        let ballot_prompt = task.ballot_prompt(&summary)?;
        engine.state.load_pending(answer_agents.iter().cloned())?;
        engine.commit(message(
            engine.transcript.next_seq(),
            &organizer,
            answer_agents.iter().cloned(),
            Stage::Execution,
            0,
            &ballot_prompt,
        ))?;
        let conversations: Vec<Conversation> = answer_agents
            .iter()
            .map(|a| Conversation::new(engine.system_prompt(a)).with_user(&ballot_prompt))
            .collect();
        let outcomes = engine.fan_out(&answer_agents, conversations);
        let mut ballots = Vec::with_capacity(answer_agents.len());
        for (agent, outcome) in answer_agents.iter().zip(outcomes) {
            let raw = match &outcome {
                Ok(text) => text.clone(),
                Err(_) => ABSTAIN_CONTENT.to_string(),
            };
            let ballot = Ballot {
                voter: agent.clone(),
                raw: raw.clone(),
                parsed: match &outcome {
                    Ok(text) => parse_vote(text, &options),
                    Err(_) => Vote::Abstain,
                },
            };
            let mut msg = message(
                engine.transcript.next_seq(),
                agent,
                [organizer.clone()],
                Stage::Execution,
                0,
                &raw,
            );
            msg.meta.insert("kind".to_string(), "ballot".to_string());
            msg.meta.insert(
                "parsed-vote".to_string(),
                match &ballot.parsed {
                    Vote::Key(k) => k.clone(),
                    Vote::Abstain => "abstain".to_string(),
                },
            );
            engine.commit(msg)?;
            ballots.push(ballot);
            advance_stage(&mut engine.state, agent)?;
        }
        let tally = tally(&ballots, &options).map_err(|_| EngineError::NoQuorum {
            transcript: Box::new(engine.transcript.clone()),
        })?;
        (tally.winner.clone(), Some(tally))
    } else {
        let leader = leader.expect("leader present when not RTE");
        let execution_prompt = task.execution_prompt(&summary)?;
        engine.state.load_pending([leader.clone()])?;
        engine.commit(message(
            engine.transcript.next_seq(),
            &organizer,
            [leader.clone()],
            Stage::Execution,
            0,
            &execution_prompt,
        ))?;
        let verdict = engine.coordinator_turn("leader", &leader, &execution_prompt)?;
        engine.commit(message(
            engine.transcript.next_seq(),
            &leader,
            [organizer.clone()],
            Stage::Execution,
            0,
            &verdict,
        ))?;
        advance_stage(&mut engine.state, &leader)?;
        (verdict, None)
    };
    debug_assert_eq!(engine.state.stage, StagePoint::Done);

    let per_stage_counts = engine.transcript.stage_counts();
    Ok(MindstormResult {
        transcript: engine.transcript,
        summary,
        final_answer,
        per_stage_counts,
        tally: election,
    })
}

/// Outcome of a right-to-change re-choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtcChoice {
    pub chosen: String,
    pub raw: String,
    pub ambiguous: bool,
}

fn rtc_prompt(sub_question: &str, own_answer: &str, peer_answers: &[String]) -> String {
    let mut prompt = format!("Question: {sub_question} Options: (a) {own_answer}");
    for (i, peer) in peer_answers.iter().enumerate() {
        let key = (b'b' + i as u8) as char;
        prompt.push_str(&format!(" ({key}) {peer}"));
    }
    prompt.push_str(". Answer:");
    prompt
}

/// Presents (a) the agent's own answer and (b..) the peers' answers; the
/// agent's selection is returned as text. Ambiguous replies conservatively
/// keep the agent's own answer.
pub fn apply_rtc(
    sub_question: &str,
    own_answer: &str,
    peer_answers: &[String],
    backend: &dyn Backend,
    system_prompt: &str,
) -> RtcChoice {
    debug_assert!(!peer_answers.is_empty(), "RTC needs at least one peer answer");
    let mut options: Vec<VoteOption> = vec![("a".to_string(), own_answer.to_string())];
    for (i, peer) in peer_answers.iter().enumerate() {
        let key = (b'b' + i as u8) as char;
        options.push((key.to_string(), peer.clone()));
    }
    let prompt = rtc_prompt(sub_question, own_answer, peer_answers);
    let conversation = Conversation::new(system_prompt).with_user(&prompt);
    let raw = match backend.respond(&conversation) {
        Ok(text) => text,
        Err(err) => {
            return RtcChoice {
                chosen: own_answer.to_string(),
                raw: err.to_string(),
                ambiguous: true,
            }
        }
    };
    match parse_vote(&raw, &options) {
        Vote::Key(key) => {
            let chosen = options
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, label)| label.clone())
                .expect("parse_vote returns a declared key");
            RtcChoice {
                chosen,
                raw,
                ambiguous: false,
            }
        }
        Vote::Abstain => RtcChoice {
            chosen: own_answer.to_string(),
            raw,
            ambiguous: true,
        },
    }
}
