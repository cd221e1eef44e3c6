//! Run summary records and verification of produced artifacts.
//!
//! A run emits `transcript.log` (the line-delimited message log) and
//! `summary.json` (this record). The summary pins the transcript's SHA-256
//! so a replay detects any flipped byte, and carries enough task context to
//! recompute tallies and derived results from the transcript alone.
//! Volatile values (wall time) are printed to the console, never written
//! into artifacts, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logfmt::{self, LogError};
use crate::message::{Stage, Transcript};
use crate::metrics::MetricsRecord;
use crate::retrieval::{parse_predictions, solution_generation, PredictionList};
use crate::voting::{Tally, VoteOption};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub config_digest: String,
    pub adapter: String,
    pub transcript_sha256: String,
    pub final_answer: String,
    pub per_stage_counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tally: Option<Tally>,
    /// Options the tally was computed over, for replay verification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_options: Option<Vec<VoteOption>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PredictionList>,
    /// Retrieval parameters needed to recompute predictions on replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_verify: Option<RetrievalVerify>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
    /// Whether scripted backends make this run byte-replayable; remote
    /// backends make it structurally replayable only.
    pub replayability: Replayability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Replayability {
    Exact,
    Structural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalVerify {
    pub duration: f64,
    pub k: usize,
    pub w_exec: bool,
    /// Editor-authored conclusion (monarchy) vs pooled debater votes.
    pub monarchy: bool,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("serializable summary");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Log(#[from] LogError),
    #[error("summary parse error: {0}")]
    Summary(#[from] serde_json::Error),
    #[error("verification failed: {0}")]
    Mismatch(String),
}

/// Outcome of verifying one run directory.
#[derive(Debug)]
pub struct VerifyReport {
    pub checks: Vec<(String, bool, String)>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|(_, ok, _)| *ok)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, ok, detail) in &self.checks {
            let mark = if *ok { "ok" } else { "MISMATCH" };
            out.push_str(&format!("{name}: {mark}"));
            if !detail.is_empty() {
                out.push_str(&format!(" ({detail})"));
            }
            out.push('\n');
        }
        let verdict = if self.all_passed() { "verified" } else { "corrupt" };
        out.push_str(verdict);
        out.push('\n');
        out
    }
}

/// Rebuilds the transcript from its log, recomputes digests, sequence
/// chain, tallies and derived results, and compares against the recorded
/// summary. Corruption errors carry the first bad record.
pub fn verify_run_dir(dir: &Path) -> Result<VerifyReport, VerifyError> {
    let transcript_path = dir.join("transcript.log");
    let summary_path = dir.join("summary.json");
    let log_bytes = std::fs::read(&transcript_path)?;
    let summary = RunSummary::from_json(&std::fs::read_to_string(&summary_path)?)?;

    // replays the seq chain; gaps and unparseable records fail here
    let transcript = logfmt::transcript_from_log(&String::from_utf8_lossy(&log_bytes))?;

    let mut checks = Vec::new();
    let mut check = |name: &str, ok: bool, detail: String| {
        checks.push((name.to_string(), ok, detail));
    };

    let sha = logfmt::sha256_hex(&log_bytes);
    check(
        "transcript-sha256",
        sha == summary.transcript_sha256,
        if sha == summary.transcript_sha256 {
            String::new()
        } else {
            format!("recomputed {sha}, recorded {}", summary.transcript_sha256)
        },
    );

    check(
        "config-digest",
        transcript.config_digest == summary.config_digest,
        String::new(),
    );
    check("run-id", transcript.run_id == summary.run_id, String::new());

    let counts = transcript.stage_counts();
    check(
        "per-stage-counts",
        counts == summary.per_stage_counts,
        format!("recomputed {counts:?}"),
    );

    // byte-identity of a re-serialization (the log is canonical)
    let reserialized = logfmt::transcript_to_log(&transcript);
    check(
        "canonical-form",
        reserialized.as_bytes() == log_bytes.as_slice(),
        String::new(),
    );

    if let (Some(recorded_tally), Some(options)) = (&summary.tally, &summary.vote_options) {
        let recount = recount_ballots(&transcript, options);
        match recount {
            Ok(tally) => check(
                "tally-recount",
                &tally == recorded_tally,
                format!("recomputed winner {}", tally.winner),
            ),
            Err(detail) => check("tally-recount", false, detail),
        }
    }

    if let (Some(predictions), Some(verify)) = (&summary.predictions, &summary.retrieval_verify) {
        match recompute_predictions(&transcript, verify) {
            Ok(recomputed) => check(
                "predictions-recompute",
                &recomputed == predictions,
                format!("recomputed {recomputed:?}"),
            ),
            Err(detail) => check("predictions-recompute", false, detail),
        }
    }

    Ok(VerifyReport { checks })
}

/// Recounts ballots recorded in the transcript (meta kind=ballot) against
/// the declared options.
fn recount_ballots(transcript: &Transcript, options: &[VoteOption]) -> Result<Tally, String> {
    let ballots: Vec<crate::voting::Ballot> = transcript
        .messages()
        .iter()
        .filter(|m| m.meta.get("kind").map(|k| k == "ballot").unwrap_or(false))
        .map(|m| crate::voting::Ballot::cast(&m.sender, &m.content, options))
        .collect();
    if ballots.is_empty() {
        return Err("no ballots in transcript".to_string());
    }
    crate::voting::tally(&ballots, options).map_err(|e| e.to_string())
}

/// Re-derives the retrieval prediction list from the transcript.
fn recompute_predictions(
    transcript: &Transcript,
    verify: &RetrievalVerify,
) -> Result<PredictionList, String> {
    let raw = if verify.monarchy {
        let conclusion = transcript
            .messages()
            .iter().rfind(|m| m.stage == Stage::Gathering && m.sender.id == "editor")
            .ok_or_else(|| "no editor conclusion in transcript".to_string())?;
        parse_predictions(&conclusion.content)
    } else {
        let finals: Vec<&crate::message::Message> = transcript
            .messages()
            .iter()
            .filter(|m| {
                m.meta
                    .get("kind")
                    .map(|k| k == "final-answer")
                    .unwrap_or(false)
            })
            .collect();
        if finals.is_empty() {
            return Err("no debater final answers in transcript".to_string());
        }
        let all: Vec<f64> = finals
            .iter()
            .flat_map(|m| parse_predictions(&m.content).0)
            .collect();
        crate::retrieval::rank_by_votes(&all)
    };
    Ok(if verify.w_exec {
        solution_generation(&raw, verify.k, verify.duration)
    } else {
        raw
    })
}
