//! Scoring: multiple-choice accuracy, the recall grid over (k, τ), grid
//! world coverage, and the pluggable external-scorer contract.
//!
//! Every metric is a pure function of its inputs; batch evaluation maps in
//! parallel over instances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, Conversation};
use crate::fanout;
use crate::retrieval::{recall_at, PredictionList};
use crate::voting::Vote;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("cannot score an empty instance set")]
    Empty,
}

/// Exact-match fraction over (chosen, correct) pairs; abstentions score
/// incorrect.
pub fn mcq_accuracy(results: &[(Vote, String)]) -> Result<f64, MetricError> {
    if results.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = results
        .iter()
        .filter(|(chosen, correct)| matches!(chosen, Vote::Key(k) if k == correct))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];
pub const DEFAULT_TAUS: [f64; 3] = [0.0, 1.0, 10.0];

/// Hit fractions per (k, τ) cell over an instance set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub ks: Vec<usize>,
    pub taus: Vec<f64>,
    /// Row-major: cells[i][j] is recall at ks[i], taus[j].
    pub cells: Vec<Vec<f64>>,
    pub n_instances: usize,
}

impl RecallReport {
    pub fn cell(&self, k: usize, tau: f64) -> Option<f64> {
        let i = self.ks.iter().position(|x| *x == k)?;
        let j = self.taus.iter().position(|x| *x == tau)?;
        Some(self.cells[i][j])
    }

    /// Nondecreasing along both the k and τ axes.
    pub fn is_monotone(&self) -> bool {
        for i in 0..self.ks.len() {
            for j in 0..self.taus.len() {
                if i > 0 && self.cells[i][j] < self.cells[i - 1][j] - 1e-12 {
                    return false;
                }
                if j > 0 && self.cells[i][j] < self.cells[i][j - 1] - 1e-12 {
                    return false;
                }
            }
        }
        true
    }

    /// Flat text table, recall as percentages.
    pub fn to_table(&self) -> String {
        let mut out = String::from("k\\tau");
        for tau in &self.taus {
            out.push_str(&format!("\t@{tau}s"));
        }
        out.push('\n');
        for (i, k) in self.ks.iter().enumerate() {
            out.push_str(&format!("R{k}"));
            for j in 0..self.taus.len() {
                out.push_str(&format!("\t{:.2}", self.cells[i][j] * 100.0));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean of `recall_at` per cell over the instances.
pub fn recall_grid(
    instances: &[(PredictionList, (f64, f64))],
    ks: &[usize],
    taus: &[f64],
) -> Result<RecallReport, MetricError> {
    if instances.is_empty() {
        return Err(MetricError::Empty);
    }
    let cells: Vec<Vec<f64>> = ks
        .iter()
        .map(|&k| {
            taus.iter()
                .map(|&tau| {
                    let hits = fanout::par_map(instances.to_vec(), move |(preds, span)| {
                        recall_at(&preds, span, k, tau) as u64
                    })
                    .into_iter()
                    .sum::<u64>();
                    hits as f64 / instances.len() as f64
                })
                .collect()
        })
        .collect();
    Ok(RecallReport {
        ks: ks.to_vec(),
        taus: taus.to_vec(),
        cells,
        n_instances: instances.len(),
    })
}

/// Which way a scorer's numbers point; surfaced as metadata rather than
/// resolved, since conventions differ per scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDirection {
    HigherBetter,
    LowerBetter,
    Unspecified,
}

/// Pluggable similarity/quality scorer living behind a backend handle.
/// Scores are labeled with their provenance so reports never present an
/// unattributed number.
pub trait ExternalScorer: Send + Sync {
    fn id(&self) -> &str;
    fn direction(&self) -> ScoreDirection;
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, BackendError>;
}

/// A labeled score as it appears in run summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub scorer: String,
    pub direction: ScoreDirection,
    pub value: f64,
}

/// Scorer backed by any agent backend: candidate and reference go in, a
/// single number must come back.
pub struct BackendScorer<B> {
    id: String,
    direction: ScoreDirection,
    backend: B,
}

impl<B: Backend> BackendScorer<B> {
    pub fn new(id: impl Into<String>, direction: ScoreDirection, backend: B) -> Self {
        Self {
            id: id.into(),
            direction,
            backend,
        }
    }
}

impl<B: Backend> ExternalScorer for BackendScorer<B> {
    fn id(&self) -> &str {
        &self.id
    }

    fn direction(&self) -> ScoreDirection {
        self.direction
    }

    fn score(&self, candidate: &str, reference: &str) -> Result<f64, BackendError> {
        let conversation = Conversation::new("You are a scorer. Reply with a single number.")
            .with_user(format!("candidate: {candidate}\nreference: {reference}"));
        let raw = self.backend.respond(&conversation)?;
        raw.trim()
            .parse::<f64>()
            .map_err(|_| BackendError::Malformed(format!("scorer returned non-number: {raw}")))
    }
}

/// Coverage of a grid world: visited free cells over all free cells.
pub fn coverage_report(world: &crate::gridworld::GridWorld) -> f64 {
    let free = world.free_cell_count();
    assert!(free >= 1, "world must have at least one free cell");
    world.visited_count() as f64 / free as f64
}

/// Per-task metric payload embedded in the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcq_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<RecallReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<ScoreRecord>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extra: BTreeMap<String, f64>,
}
