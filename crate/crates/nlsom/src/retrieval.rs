//! Temporal retrieval over narrated recordings.
//!
//! Debaters each receive a contiguous slice of the narration, discuss for a
//! round or more, and either an editor (monarchy) or a timestamp vote
//! (democracy) produces a ranked prediction list. Solution generation
//! optionally post-processes: invalid removal, sub-second pooling, and grid
//! augmentation. Timestamps are seconds as real numbers throughout.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendRegistry, Conversation};
use crate::fanout;
use crate::logfmt;
use crate::message::{message, AgentId, Stage, Transcript};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("cannot slice {items} narrations into {agents} chunks")]
    TooManyAgents { items: usize, agents: usize },
    #[error("fixture parse error at line {line}: {detail}")]
    Fixture { line: usize, detail: String },
    #[error("backend {0} missing from registry")]
    MissingBackend(String),
    #[error("debater backend failed mid-protocol: {0}")]
    Backend(String),
    #[error("transcript error: {0}")]
    Transcript(String),
}

/// One retrieval instance: a narrated recording, a query, and the
/// ground-truth span used only for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTask {
    pub narrations: Vec<(f64, String)>,
    pub video_summary: String,
    pub query: String,
    pub ground_truth: (f64, f64),
    pub duration: f64,
}

/// Ranked predicted timestamps, best first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionList(pub Vec<f64>);

impl PredictionList {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

/// Splits the narration into `n_agents` contiguous chunks whose sizes
/// differ by at most one, earlier chunks taking the extra item.
pub fn slice_narrations<T: Clone>(
    narrations: &[T],
    n_agents: usize,
) -> Result<Vec<Vec<T>>, RetrievalError> {
    assert!(n_agents >= 1, "n_agents must be >= 1");
    if n_agents > narrations.len() {
        return Err(RetrievalError::TooManyAgents {
            items: narrations.len(),
            agents: n_agents,
        });
    }
    let base = narrations.len() / n_agents;
    let extra = narrations.len() % n_agents;
    let mut chunks = Vec::with_capacity(n_agents);
    let mut start = 0;
    for i in 0..n_agents {
        let size = base + usize::from(i < extra);
        chunks.push(narrations[start..start + size].to_vec());
        start += size;
    }
    Ok(chunks)
}

/// Extracts timestamps (plain seconds, optionally signed or fractional, and
/// mm:ss forms) in order of appearance. Duplicates and invalid values are
/// retained; solution generation cleans them.
pub fn parse_predictions(raw: &str) -> PredictionList {
    // mm:ss first so "1:05" is not read as 1 and 05
    static PATTERN: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = PATTERN.get_or_init(|| {
        regex::Regex::new(r"(?P<min>\d+):(?P<sec>[0-5]\d)|(?P<num>-?\d+(?:\.\d+)?)")
            .expect("valid pattern")
    });
    let mut out = Vec::new();
    for caps in re.captures_iter(raw) {
        if let (Some(min), Some(sec)) = (caps.name("min"), caps.name("sec")) {
            let minutes: f64 = min.as_str().parse().expect("digits");
            let seconds: f64 = sec.as_str().parse().expect("digits");
            out.push(minutes * 60.0 + seconds);
        } else if let Some(num) = caps.name("num") {
            // skip digits glued to a word ("R5", "agent4"), keep "12s"
            let glued_left = raw[..num.start()]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphabetic());
            if !glued_left {
                out.push(num.as_str().parse().expect("number"));
            }
        }
    }
    PredictionList(out)
}

/// Evenly divides `[0, T]` into `k + 1` components and predicts the
/// boundaries.
pub fn grid_baseline(duration: f64, k: usize) -> PredictionList {
    assert!(duration > 0.0 && k >= 1);
    PredictionList(
        (1..=k)
            .map(|i| i as f64 * duration / (k as f64 + 1.0))
            .collect(),
    )
}

/// `k` i.i.d. uniform draws on `[0, T]`, deterministic under the seed.
pub fn random_baseline(duration: f64, k: usize, seed: u64) -> PredictionList {
    assert!(duration > 0.0 && k >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PredictionList((0..k).map(|_| rng.gen_range(0.0..=duration)).collect())
}

/// Pooling radius: predictions closer than this merge into their mean.
const MERGE_RADIUS_SECONDS: f64 = 1.0;

/// Pools values lying within the merge radius of a group's mean, repeating
/// until all group means are mutually at least one radius apart. Groups
/// keep their original members so later merges stay member-weighted.
fn pool_within_radius(values: &[f64]) -> Vec<Vec<f64>> {
    let mut groups: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
    loop {
        let mut merged: Vec<Vec<f64>> = Vec::with_capacity(groups.len());
        let mut changed = false;
        for group in groups {
            let value = mean(&group);
            match merged
                .iter_mut()
                .find(|g| (mean(g) - value).abs() < MERGE_RADIUS_SECONDS)
            {
                Some(existing) => {
                    existing.extend(group);
                    changed = true;
                }
                None => merged.push(group),
            }
        }
        groups = merged;
        if !changed {
            return groups;
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Post-processing: (R1) drop predictions outside `[0, T]`; (R2) merge runs
/// closer than one second into their mean; (R3) if fewer than `k` remain,
/// append grid-baseline timestamps, skipping any within one second of an
/// existing prediction, until the list reaches `k` or the grid is
/// exhausted. Idempotent.
pub fn solution_generation(preds: &PredictionList, k: usize, duration: f64) -> PredictionList {
    assert!(duration > 0.0 && k >= 1);
    let valid: Vec<f64> = preds
        .0
        .iter()
        .copied()
        .filter(|t| (0.0..=duration).contains(t))
        .collect();
    let mut out: Vec<f64> = pool_within_radius(&valid).iter().map(|g| mean(g)).collect();
    if out.len() < k {
        for candidate in grid_baseline(duration, k).0 {
            if out.len() >= k {
                break;
            }
            if out
                .iter()
                .all(|t| (t - candidate).abs() >= MERGE_RADIUS_SECONDS)
            {
                out.push(candidate);
            }
        }
    }
    PredictionList(out)
}

/// Democracy vote counting over continuous timestamps: values within one
/// second pool together; pools rank by vote count, ties by earlier time.
pub fn pooled_vote_ranking(timestamps: &[f64]) -> Vec<(f64, usize)> {
    let mut pools: Vec<(f64, usize)> = pool_within_radius(timestamps)
        .iter()
        .map(|group| (mean(group), group.len()))
        .collect();
    pools.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.0.partial_cmp(&b.0).expect("finite timestamps"))
    });
    pools
}

/// The ranked list induced by `pooled_vote_ranking`.
pub fn rank_by_votes(timestamps: &[f64]) -> PredictionList {
    PredictionList(pooled_vote_ranking(timestamps).iter().map(|(t, _)| *t).collect())
}

/// True iff any of the first `k` predictions lands inside the span relaxed
/// by `tau` seconds on both ends.
pub fn recall_at(preds: &PredictionList, span: (f64, f64), k: usize, tau: f64) -> bool {
    assert!(k >= 1);
    let (t_s, t_e) = span;
    preds
        .0
        .iter()
        .take(k)
        .any(|t| t_s - tau <= *t && *t <= t_e + tau)
}

/// Retrieval society: `n` debaters plus, in a monarchy, an editor.
#[derive(Debug, Clone)]
pub struct RetrievalSociety {
    pub debater_backends: Vec<String>,
    /// Present in the monarchy structure; democracy disables the editor and
    /// ranks timestamps by vote count instead.
    pub editor_backend: Option<String>,
    pub rounds: u32,
    /// Apply solution generation to the final list.
    pub with_exec: bool,
    /// Minimum prediction count solution generation fills to.
    pub k: usize,
}

impl Default for RetrievalSociety {
    fn default() -> Self {
        Self {
            debater_backends: Vec::new(),
            editor_backend: None,
            rounds: 1,
            with_exec: false,
            k: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalOutcome {
    pub predictions: PredictionList,
    pub transcript: Transcript,
    /// Vote count per pooled timestamp (democracy only), rank order.
    pub vote_ranking: Option<Vec<(f64, usize)>>,
    pub summary: String,
}

const DEBATER_SYSTEM_PROMPT: &str =
    "You are an assistant answering questions about a video from its narration.";

fn init_prompt(task: &RetrievalTask, chunk: &[(f64, String)]) -> String {
    let narration_block = chunk
        .iter()
        .map(|(t, text)| format!("[{t:.1}s] {text}"))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "You are going to answer some questions about a video. Here is a summary of the video:\n{}\nFollowings are the video content.\n{}\nThe video ends here.\nMy question is, {}",
        task.video_summary, narration_block, task.query
    )
}

fn exchange_prompt(task: &RetrievalTask, peers: &[(AgentId, String)]) -> String {
    let names = peers
        .iter()
        .map(|(a, _)| a.name.clone())
        .collect::<Vec<_>>()
        .join(", ");
    let mut prompt = format!(
        "Thanks for your answer. Regarding the question, {} I also asked your colleagues {}. They are all my assistants. They have the observation of the other part of the video. You can choose to trust them or not. You also have your unique observation of the video.",
        task.query, names
    );
    for (agent, statement) in peers {
        prompt.push_str(&format!(" Here is what {} says. {}", agent.name, statement));
    }
    prompt.push_str(" What do you think? How much do you agree or disagree with them?");
    prompt
}

fn gathering_prompt(task: &RetrievalTask, summaries: &[(AgentId, String)]) -> String {
    let block = summaries
        .iter()
        .map(|(a, s)| format!("{}: {}", a.name, s))
        .collect::<Vec<_>>()
        .join(" ");
    format!(
        "I have collected the answers from my assistants to my question, {}. The answers are as follows. {}\nPlease carefully read and analyze their answers, then conclude and summarize all the possible answers and the reasons why they are possible answers in a few sentences.",
        task.query, block
    )
}

fn final_vote_prompt(task: &RetrievalTask) -> String {
    format!(
        "Now, considering all the conditions, please summarize your final answer to my question. The question is {}.",
        task.query
    )
}

/// Runs the debater protocol and returns the ranked prediction list.
///
/// Monarchy: the editor concludes and its output is parsed. Democracy: each
/// debater's final message is parsed, timestamps within one second pool,
/// and pools rank by vote count with ties going to the earlier time.
pub fn run_retrieval(
    society: &RetrievalSociety,
    task: &RetrievalTask,
    registry: &BackendRegistry,
    run_id: &str,
) -> Result<RetrievalOutcome, RetrievalError> {
    let n = society.debater_backends.len().max(1);
    let chunks = slice_narrations(&task.narrations, n)?;
    let debaters: Vec<AgentId> = (0..n)
        .map(|i| AgentId::new(format!("debater-{}", i + 1), format!("Debater {}", i + 1)))
        .collect();
    let editor = AgentId::new("editor", "Editor");
    let moderator = AgentId::new("moderator", "Moderator");

    let backends: Vec<Arc<dyn Backend>> = society
        .debater_backends
        .iter()
        .map(|name| {
            registry
                .get(name)
                .ok_or_else(|| RetrievalError::MissingBackend(name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let any_serial = backends.iter().any(|b| b.serial());

    let digest = logfmt::digest_of(&(
        &society.debater_backends,
        &society.editor_backend,
        society.rounds,
        society.with_exec,
        society.k,
    ));
    let mut transcript = Transcript::new(run_id, digest);
    let commit = |t: &mut Transcript, m| {
        t.append(m)
            .map_err(|e: crate::message::TranscriptError| RetrievalError::Transcript(e.to_string()))
    };

    // Mission initialization: each debater sees only its chunk.
    let mut conversations: Vec<Conversation> = Vec::with_capacity(n);
    for (i, chunk) in chunks.iter().enumerate() {
        let prompt = init_prompt(task, chunk);
        let msg = message(
            transcript.next_seq(),
            &moderator,
            [debaters[i].clone()],
            Stage::Init,
            0,
            &prompt,
        );
        commit(&mut transcript, msg)?;
        conversations.push(Conversation::new(DEBATER_SYSTEM_PROMPT).with_user(prompt));
    }
    let mut statements: Vec<String> = respond_all(&backends, &conversations, any_serial)?;
    for (i, statement) in statements.iter().enumerate() {
        let msg = message(
            transcript.next_seq(),
            &debaters[i],
            [moderator.clone()],
            Stage::Init,
            0,
            statement,
        );
        commit(&mut transcript, msg)?;
        conversations[i].push(crate::backend::Speaker::Assistant, statement);
    }

    // Mindstorm: every debater sees the latest statement from the others.
    for round in 1..=society.rounds {
        for i in 0..n {
            let peers: Vec<(AgentId, String)> = debaters
                .iter()
                .zip(statements.iter())
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, (a, s))| (a.clone(), s.clone()))
                .collect();
            let prompt = exchange_prompt(task, &peers);
            let msg = message(
                transcript.next_seq(),
                &moderator,
                [debaters[i].clone()],
                Stage::Mindstorm,
                round,
                &prompt,
            );
            commit(&mut transcript, msg)?;
            conversations[i].push(crate::backend::Speaker::User, prompt);
        }
        statements = respond_all(&backends, &conversations, any_serial)?;
        for (i, statement) in statements.iter().enumerate() {
            let msg = message(
                transcript.next_seq(),
                &debaters[i],
                [moderator.clone()],
                Stage::Mindstorm,
                round,
                statement,
            );
            commit(&mut transcript, msg)?;
            conversations[i].push(crate::backend::Speaker::Assistant, statement);
        }
    }

    let summaries: Vec<(AgentId, String)> = debaters
        .iter()
        .cloned()
        .zip(statements.iter().cloned())
        .collect();

    let (raw_predictions, vote_ranking, summary) = match &society.editor_backend {
        Some(editor_ref) => {
            // Monarchy: the editor concludes.
            let editor_backend = registry
                .get(editor_ref)
                .ok_or_else(|| RetrievalError::MissingBackend(editor_ref.clone()))?;
            let prompt = gathering_prompt(task, &summaries);
            let msg = message(
                transcript.next_seq(),
                &moderator,
                [editor.clone()],
                Stage::Gathering,
                0,
                &prompt,
            );
            commit(&mut transcript, msg)?;
            let conversation =
                Conversation::new("You are the editor concluding a discussion.").with_user(&prompt);
            let conclusion = editor_backend
                .respond(&conversation)
                .map_err(|e| RetrievalError::Backend(e.to_string()))?;
            let msg = message(
                transcript.next_seq(),
                &editor,
                [moderator.clone()],
                Stage::Gathering,
                0,
                &conclusion,
            );
            commit(&mut transcript, msg)?;
            (parse_predictions(&conclusion), None, conclusion)
        }
        None => {
            // Democracy: every debater casts its final answer.
            let prompt = final_vote_prompt(task);
            let mut finals = Vec::with_capacity(n);
            for (i, debater) in debaters.iter().enumerate() {
                let msg = message(
                    transcript.next_seq(),
                    &moderator,
                    [debater.clone()],
                    Stage::Execution,
                    0,
                    &prompt,
                );
                commit(&mut transcript, msg)?;
                conversations[i].push(crate::backend::Speaker::User, prompt.clone());
            }
            let answers = respond_all(&backends, &conversations, any_serial)?;
            for (i, answer) in answers.iter().enumerate() {
                let mut msg = message(
                    transcript.next_seq(),
                    &debaters[i],
                    [moderator.clone()],
                    Stage::Execution,
                    0,
                    answer,
                );
                msg.meta
                    .insert("kind".to_string(), "final-answer".to_string());
                commit(&mut transcript, msg)?;
                finals.push(parse_predictions(answer));
            }
            let all: Vec<f64> = finals.iter().flat_map(|p| p.0.iter().copied()).collect();
            let pools = pooled_vote_ranking(&all);
            let list = PredictionList(pools.iter().map(|(t, _)| *t).collect());
            let summary = summaries
                .iter()
                .map(|(a, s)| format!("{}: {}", a.name, s))
                .collect::<Vec<_>>()
                .join(" ");
            (list, Some(pools), summary)
        }
    };

    let predictions = if society.with_exec {
        solution_generation(&raw_predictions, society.k, task.duration)
    } else {
        raw_predictions
    };

    Ok(RetrievalOutcome {
        predictions,
        transcript,
        vote_ranking,
        summary,
    })
}

fn respond_all(
    backends: &[Arc<dyn Backend>],
    conversations: &[Conversation],
    any_serial: bool,
) -> Result<Vec<String>, RetrievalError> {
    let work: Vec<(Arc<dyn Backend>, Conversation)> = backends
        .iter()
        .cloned()
        .zip(conversations.iter().cloned())
        .collect();
    fanout::map_maybe_parallel(work, any_serial, |(backend, conversation)| {
        backend.respond(&conversation)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| RetrievalError::Backend(e.to_string()))
}

/// Fixture file: `key: value` header lines (duration, query, span, summary),
/// a `---` separator, then one `timestamp<TAB>text` narration per line.
pub fn parse_fixture(text: &str) -> Result<RetrievalTask, RetrievalError> {
    let mut duration = None;
    let mut query = None;
    let mut span = None;
    let mut summary = None;
    let mut narrations = Vec::new();
    let mut in_header = true;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let bad = |detail: &str| RetrievalError::Fixture {
            line: line_no,
            detail: detail.to_string(),
        };
        if line.trim().is_empty() {
            continue;
        }
        if in_header {
            if line.trim() == "---" {
                in_header = false;
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| bad("expected key: value"))?;
            let value = value.trim();
            match key.trim() {
                "duration" => {
                    duration = Some(value.parse::<f64>().map_err(|_| bad("bad duration"))?)
                }
                "query" => query = Some(value.to_string()),
                "span" => {
                    let (s, e) = value
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| bad("span needs two values"))?;
                    span = Some((
                        s.trim().parse::<f64>().map_err(|_| bad("bad span start"))?,
                        e.trim().parse::<f64>().map_err(|_| bad("bad span end"))?,
                    ));
                }
                "summary" => summary = Some(value.to_string()),
                other => return Err(bad(&format!("unknown header key {other}"))),
            }
        } else {
            let (t, text) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected timestamp<TAB>text"))?;
            narrations.push((
                t.trim().parse::<f64>().map_err(|_| bad("bad timestamp"))?,
                text.to_string(),
            ));
        }
    }
    let missing = |what: &str| RetrievalError::Fixture {
        line: 0,
        detail: format!("missing {what}"),
    };
    let duration = duration.ok_or_else(|| missing("duration"))?;
    let ground_truth = span.ok_or_else(|| missing("span"))?;
    let task = RetrievalTask {
        narrations,
        video_summary: summary.ok_or_else(|| missing("summary"))?,
        query: query.ok_or_else(|| missing("query"))?,
        ground_truth,
        duration,
    };
    if !(0.0 <= ground_truth.0 && ground_truth.0 <= ground_truth.1 && ground_truth.1 <= duration) {
        return Err(RetrievalError::Fixture {
            line: 0,
            detail: "span must satisfy 0 <= t_s <= t_e <= duration".to_string(),
        });
    }
    if !task.narrations.windows(2).all(|w| w[0].0 <= w[1].0) {
        return Err(RetrievalError::Fixture {
            line: 0,
            detail: "narration timestamps must be sorted ascending".to_string(),
        });
    }
    Ok(task)
}

/// Per-instance retrieval results keyed for reporting.
pub type InstanceResults = BTreeMap<String, PredictionList>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, ScriptedBehavior};
    use proptest::prelude::*;

    #[test]
    fn slice_even() {
        let items: Vec<u32> = (0..8).collect();
        let chunks = slice_narrations(&items, 4).unwrap();
        let sizes: Vec<usize> = chunks.iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![2, 2, 2, 2]);
    }

    #[test]
    fn slice_uneven_front_loads() {
        let items: Vec<u32> = (0..7).collect();
        let chunks = slice_narrations(&items, 4).unwrap();
        let sizes: Vec<usize> = chunks.iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![2, 2, 2, 1]);
    }

    #[test]
    fn slice_singletons() {
        let items: Vec<u32> = (0..4).collect();
        let chunks = slice_narrations(&items, 4).unwrap();
        assert!(chunks.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn slice_too_many_agents_errors() {
        let items: Vec<u32> = (0..3).collect();
        assert!(slice_narrations(&items, 4).is_err());
    }

    #[test]
    fn slices_concatenate_losslessly() {
        for len in 1..30usize {
            for n in 1..=len {
                let items: Vec<usize> = (0..len).collect();
                let chunks = slice_narrations(&items, n).unwrap();
                let rejoined: Vec<usize> = chunks.concat();
                assert_eq!(rejoined, items);
            }
        }
    }

    #[test]
    fn parse_seconds_and_minute_forms() {
        assert_eq!(
            parse_predictions("around 12s and again at 1:05").0,
            vec![12.0, 65.0]
        );
    }

    #[test]
    fn parse_empty_when_nothing_found() {
        assert!(parse_predictions("no relevant activity observed")
            .0
            .is_empty());
    }

    #[test]
    fn parse_keeps_negative_values() {
        assert_eq!(parse_predictions("at -5 seconds").0, vec![-5.0]);
    }

    #[test]
    fn parse_skips_word_glued_digits() {
        assert_eq!(parse_predictions("agent4 says 10.5").0, vec![10.5]);
    }

    #[test]
    fn grid_examples() {
        assert_eq!(grid_baseline(100.0, 4).0, vec![20.0, 40.0, 60.0, 80.0]);
        assert_eq!(grid_baseline(100.0, 1).0, vec![50.0]);
        assert_eq!(grid_baseline(60.0, 2).0, vec![20.0, 40.0]);
    }

    #[test]
    fn random_baseline_is_seed_deterministic_and_in_range() {
        let a = random_baseline(100.0, 5, 42);
        let b = random_baseline(100.0, 5, 42);
        assert_eq!(a, b);
        assert!(a.0.iter().all(|t| (0.0..=100.0).contains(t)));
        assert_ne!(a, random_baseline(100.0, 5, 43));
    }

    #[test]
    fn solution_generation_worked_examples() {
        let p = solution_generation(&PredictionList(vec![-5.0, 10.0, 10.5, 60.0]), 2, 100.0);
        assert_eq!(p.0, vec![10.25, 60.0]);

        let p = solution_generation(&PredictionList(vec![]), 4, 100.0);
        assert_eq!(p.0, vec![20.0, 40.0, 60.0, 80.0]);

        let p = solution_generation(&PredictionList(vec![20.4]), 4, 100.0);
        assert_eq!(p.0, vec![20.4, 40.0, 60.0, 80.0]);
    }

    #[test]
    fn recall_examples() {
        assert!(recall_at(&PredictionList(vec![10.0]), (8.0, 12.0), 1, 0.0));
        assert!(recall_at(&PredictionList(vec![7.0]), (8.0, 12.0), 1, 1.0));
        assert!(!recall_at(
            &PredictionList(vec![1.0, 2.0, 3.0, 10.0]),
            (8.0, 12.0),
            3,
            0.0
        ));
    }

    fn demo_task() -> RetrievalTask {
        RetrievalTask {
            narrations: (0..8)
                .map(|i| (i as f64 * 10.0, format!("activity {i}")))
                .collect(),
            video_summary: "a day of chores".to_string(),
            query: "when was the car unloaded?".to_string(),
            ground_truth: (120.0, 135.0),
            duration: 480.0,
        }
    }

    #[test]
    fn democracy_pools_and_ranks_by_votes() {
        let finals = ["10", "10.3", "55", "10.1"];
        let mut registry = BackendRegistry::new();
        let mut society = RetrievalSociety {
            rounds: 1,
            ..Default::default()
        };
        for (i, t) in finals.iter().enumerate() {
            let name = format!("debater-be-{i}");
            registry.insert(
                &name,
                Arc::new(ScriptedBackend::new(
                    ScriptedBehavior::with_default("no relevant activity")
                        .rule("final answer", format!("around {t} seconds")),
                )),
            );
            society.debater_backends.push(name);
        }
        let outcome = run_retrieval(&society, &demo_task(), &registry, "run-d").unwrap();
        let ranking = outcome.vote_ranking.unwrap();
        assert_eq!(ranking.len(), 2);
        assert_eq!(ranking[0].1, 3);
        assert!((ranking[0].0 - 10.1333).abs() < 1e-3);
        assert_eq!(ranking[1], (55.0, 1));
        assert_eq!(outcome.predictions.0.len(), 2);
    }

    #[test]
    fn monarchy_editor_echo_preserves_order() {
        let mut registry = BackendRegistry::new();
        let mut society = RetrievalSociety {
            rounds: 1,
            editor_backend: Some("editor-be".to_string()),
            ..Default::default()
        };
        for (i, t) in ["33", "77"].iter().enumerate() {
            let name = format!("debater-be-{i}");
            registry.insert(
                &name,
                Arc::new(ScriptedBackend::constant(format!("I saw it at {t} seconds"))),
            );
            society.debater_backends.push(name);
        }
        registry.insert(
            "editor-be",
            Arc::new(ScriptedBackend::constant("timestamps: 33 then 77.")),
        );
        let outcome = run_retrieval(&society, &demo_task(), &registry, "run-m").unwrap();
        assert_eq!(outcome.predictions.0, vec![33.0, 77.0]);
    }

    #[test]
    fn figure_style_single_informed_debater_wins() {
        // only debater 1's chunk contains the target; peers defer after
        // seeing its statement
        let mut registry = BackendRegistry::new();
        let mut society = RetrievalSociety {
            rounds: 1,
            with_exec: true,
            k: 5,
            ..Default::default()
        };
        registry.insert(
            "informed",
            Arc::new(ScriptedBackend::new(ScriptedBehavior::with_default(
                "the activity happens around 125 seconds",
            ))),
        );
        society.debater_backends.push("informed".to_string());
        for i in 1..4 {
            let name = format!("peer-{i}");
            registry.insert(
                &name,
                Arc::new(ScriptedBackend::new(
                    ScriptedBehavior::with_default("no relevant activity observed")
                        .rule("Here is what", "I agree with Debater 1, likely 125 seconds"),
                )),
            );
            society.debater_backends.push(name);
        }
        let outcome = run_retrieval(&society, &demo_task(), &registry, "run-fig").unwrap();
        let rank1 = outcome.predictions.0[0];
        let (t_s, t_e) = demo_task().ground_truth;
        assert!(t_s <= rank1 && rank1 <= t_e, "rank-1 {rank1} outside truth");
    }

    #[test]
    fn fixture_roundtrip() {
        let text = "duration: 480\nquery: where is the screwdriver?\nspan: 120 135\nsummary: garage chores\n---\n0.0\twalks in\n12.5\topens toolbox\n";
        let task = parse_fixture(text).unwrap();
        assert_eq!(task.duration, 480.0);
        assert_eq!(task.ground_truth, (120.0, 135.0));
        assert_eq!(task.narrations.len(), 2);
        assert_eq!(task.narrations[1].0, 12.5);
    }

    #[test]
    fn fixture_rejects_unsorted_narrations() {
        let text = "duration: 100\nquery: q?\nspan: 1 2\nsummary: s\n---\n5\tb\n1\ta\n";
        assert!(parse_fixture(text).is_err());
    }

    proptest! {
        // solution generation is idempotent and clean: in range, gaps >= 1s
        #[test]
        fn solution_generation_properties(
            raw in proptest::collection::vec(-50.0f64..150.0, 0..25),
            k in 1usize..8,
        ) {
            let duration = 100.0;
            let once = solution_generation(&PredictionList(raw), k, duration);
            let twice = solution_generation(&once, k, duration);
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.0.iter().all(|t| (0.0..=duration).contains(t)));
            for i in 0..once.0.len() {
                for j in 0..i {
                    prop_assert!((once.0[i] - once.0[j]).abs() >= 1.0);
                }
            }
            // length >= k unless the grid was exhausted by the 1s skip rule
            if once.0.len() < k {
                let grid = grid_baseline(duration, k);
                prop_assert!(grid.0.iter().all(|g| once
                    .0
                    .iter()
                    .any(|t| (t - g).abs() < 1.0)));
            }
        }

        // recall_at is monotone in k and tau
        #[test]
        fn recall_monotone(
            preds in proptest::collection::vec(0.0f64..100.0, 1..10),
            t_s in 0.0f64..90.0,
            width in 0.0f64..10.0,
            k in 1usize..8,
            tau in 0.0f64..15.0,
        ) {
            let preds = PredictionList(preds);
            let span = (t_s, t_s + width);
            let base = recall_at(&preds, span, k, tau);
            if base {
                prop_assert!(recall_at(&preds, span, k + 1, tau));
                prop_assert!(recall_at(&preds, span, k, tau + 1.0));
            }
        }
    }
}
