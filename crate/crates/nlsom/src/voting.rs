//! Ballot parsing, plurality tallying, and deterministic tie-breaking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::AgentId;

/// An option a ballot can select: stable key plus display label.
pub type VoteOption = (String, String);

/// A parsed ballot choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    Key(String),
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub voter: AgentId,
    pub raw: String,
    pub parsed: Vote,
}

impl Ballot {
    pub fn cast(voter: &AgentId, raw: impl Into<String>, options: &[VoteOption]) -> Self {
        let raw = raw.into();
        let parsed = parse_vote(&raw, options);
        Self {
            voter: voter.clone(),
            raw,
            parsed,
        }
    }
}

/// Parses a free-text vote against the declared options.
///
/// Matching precedence, each level tried only when the previous found no
/// match: (1) a key in parentheses, e.g. "(b)"; (2) a bare key delimited by
/// non-alphanumerics; (3) a case-insensitive substring match of a label.
/// A level that matches several distinct options is ambiguous and abstains;
/// no match at any level abstains. At levels 2 and 3, an occurrence lying
/// wholly inside a longer option's occurrence does not count on its own
/// ("Expressionism Artist" inside "Abstract Expressionism Artist" is one
/// vote, not two).
pub fn parse_vote(raw: &str, options: &[VoteOption]) -> Vote {
    debug_assert!(!options.is_empty(), "options must be non-empty");
    let lower = raw.to_lowercase();

    let parenthesized: Vec<&VoteOption> = options
        .iter()
        .filter(|(key, _)| lower.contains(&format!("({})", key.to_lowercase())))
        .collect();
    match parenthesized.len() {
        1 => return Vote::Key(parenthesized[0].0.clone()),
        n if n > 1 => return Vote::Abstain,
        _ => {}
    }

    let bare = masked_matches(&lower, options, |(key, _)| key);
    match bare.len() {
        1 => return Vote::Key(bare[0].clone()),
        n if n > 1 => return Vote::Abstain,
        _ => {}
    }

    let by_label = masked_matches(&lower, options, |(_, label)| label);
    match by_label.len() {
        1 => Vote::Key(by_label[0].clone()),
        _ => Vote::Abstain,
    }
}

/// Keys whose needle occurs delimited in `haystack`, longest needles
/// claiming their spans first so nested shorter needles cannot double-count.
fn masked_matches<'o>(
    haystack: &str,
    options: &'o [VoteOption],
    needle_of: impl Fn(&'o VoteOption) -> &'o str,
) -> Vec<&'o String> {
    let mut masked: Vec<char> = haystack.chars().collect();
    let mut by_length: Vec<&VoteOption> = options.iter().collect();
    by_length.sort_by_key(|o| std::cmp::Reverse(needle_of(o).chars().count()));
    let mut hits: Vec<(usize, &'o String)> = Vec::new();
    for option in by_length {
        let needle: Vec<char> = needle_of(option).to_lowercase().chars().collect();
        if needle.is_empty() {
            continue;
        }
        let mut found = false;
        let mut i = 0;
        while i + needle.len() <= masked.len() {
            let window = &masked[i..i + needle.len()];
            let left_ok = i == 0 || !masked[i - 1].is_alphanumeric();
            let right_end = i + needle.len();
            let right_ok =
                right_end == masked.len() || !masked[right_end].is_alphanumeric();
            if window == needle.as_slice() && left_ok && right_ok {
                for c in masked[i..right_end].iter_mut() {
                    *c = '\u{0}';
                }
                found = true;
                i = right_end;
            } else {
                i += 1;
            }
        }
        if found {
            let position = options
                .iter()
                .position(|o| std::ptr::eq(o, option))
                .expect("member of options");
            hits.push((position, &option.0));
        }
    }
    hits.sort_by_key(|(position, _)| *position);
    hits.into_iter().map(|(_, key)| key).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    /// Count per option key; every declared option appears, abstentions
    /// never count toward any option.
    pub counts: BTreeMap<String, u64>,
    pub winner: String,
    pub tie_broken: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TallyError {
    #[error("no quorum: every ballot abstained")]
    NoQuorum,
    #[error("ballot references unknown key: {0}")]
    UnknownKey(String),
}

/// Plurality count. A tie goes to the earliest option in declaration order
/// and is surfaced via `tie_broken`; an all-abstain election has no quorum.
pub fn tally(ballots: &[Ballot], options: &[VoteOption]) -> Result<Tally, TallyError> {
    let mut counts: BTreeMap<String, u64> =
        options.iter().map(|(key, _)| (key.clone(), 0)).collect();
    let mut cast = 0u64;
    for ballot in ballots {
        if let Vote::Key(key) = &ballot.parsed {
            let slot = counts
                .get_mut(key)
                .ok_or_else(|| TallyError::UnknownKey(key.clone()))?;
            *slot += 1;
            cast += 1;
        }
    }
    if cast == 0 {
        return Err(TallyError::NoQuorum);
    }
    let best = options
        .iter()
        .map(|(key, _)| counts[key])
        .max()
        .expect("options non-empty");
    let mut leaders = options.iter().filter(|(key, _)| counts[key] == best);
    let winner = leaders.next().expect("max exists").0.clone();
    let tie_broken = leaders.next().is_some();
    Ok(Tally {
        counts,
        winner,
        tie_broken,
    })
}
