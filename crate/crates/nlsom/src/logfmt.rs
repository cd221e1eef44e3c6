//! Line-delimited log persistence.
//!
//! Transcripts and ledger journals share one format: the first line is a
//! header record, every following line is one record, all JSON. Field names
//! are stable (`seq`, `sender`, `recipients`, `stage`, `round`, `content`,
//! `meta`) and maps are ordered, so serialization is deterministic and a
//! replay over the file reconstructs the original byte-for-byte.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::message::{Message, Transcript, TranscriptError};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt record at line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("corrupt record at line {line}: {source}")]
    Protocol {
        line: usize,
        source: TranscriptError,
    },
    #[error("empty log: missing header record")]
    MissingHeader,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub run_id: String,
    pub config_digest: String,
}

/// Serializes a transcript to the line log format.
pub fn transcript_to_log(t: &Transcript) -> String {
    let header = Header {
        run_id: t.run_id.clone(),
        config_digest: t.config_digest.clone(),
    };
    let mut out = String::new();
    writeln_json(&mut out, &header);
    for m in t.messages() {
        writeln_json(&mut out, m);
    }
    out
}

/// Rebuilds a transcript by re-appending every record; any gap or
/// unparseable line reports the first bad record.
pub fn transcript_from_log(log: &str) -> Result<Transcript, LogError> {
    let mut lines = log.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(LogError::MissingHeader)?;
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| LogError::Corrupt {
            line: 1,
            detail: e.to_string(),
        })?;
    let mut t = Transcript::new(header.run_id, header.config_digest);
    for (idx, line) in lines {
        let msg: Message = serde_json::from_str(line).map_err(|e| LogError::Corrupt {
            line: idx + 1,
            detail: e.to_string(),
        })?;
        t.append(msg)
            .map_err(|source| LogError::Protocol { line: idx + 1, source })?;
    }
    Ok(t)
}

pub fn write_transcript(path: &Path, t: &Transcript) -> Result<(), LogError> {
    std::fs::write(path, transcript_to_log(t))?;
    Ok(())
}

pub fn read_transcript(path: &Path) -> Result<Transcript, LogError> {
    let log = std::fs::read_to_string(path)?;
    transcript_from_log(&log)
}

/// Hex SHA-256 of raw bytes; recorded in run summaries so replays detect
/// any flipped byte in a produced log.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("writing to string");
    }
    out
}

/// Content digest of any canonically-serializable value.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_vec(value).expect("serializable value");
    sha256_hex(&canonical)
}

fn writeln_json<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("serializable record"));
    out.push('\n');
}

/// A generic line log: header plus arbitrary records (used by the ledger
/// journal, where records are entries and lifecycle events).
pub fn records_to_log<T: Serialize>(header: &Header, records: &[T]) -> String {
    let mut out = String::new();
    writeln_json(&mut out, header);
    for r in records {
        writeln_json(&mut out, r);
    }
    out
}

pub fn records_from_log<T: for<'de> Deserialize<'de>>(
    log: &str,
) -> Result<(Header, Vec<T>), LogError> {
    let mut lines = log.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(LogError::MissingHeader)?;
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| LogError::Corrupt {
            line: 1,
            detail: e.to_string(),
        })?;
    let mut records = Vec::new();
    for (idx, line) in lines {
        let record: T = serde_json::from_str(line).map_err(|e| LogError::Corrupt {
            line: idx + 1,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok((header, records))
}
