//! Console agent: a human expert answering from an attached terminal.

use std::io::{BufRead, Write};

use super::{Backend, BackendError, Conversation, Speaker};

/// Prints the conversation tail to `out`, reads one line from `input`, and
/// returns it verbatim. End of input is a transport error.
pub fn console_respond<R: BufRead, W: Write>(
    conversation: &Conversation,
    input: &mut R,
    out: &mut W,
) -> Result<String, BackendError> {
    let render = |r: Result<(), std::io::Error>| r.map_err(|e| BackendError::Transport(e.to_string()));
    render(writeln!(out, "--- conversation ---"))?;
    render(writeln!(out, "[system] {}", conversation.system_prompt))?;
    for (speaker, text) in conversation.turns.iter().rev().take(6).rev() {
        let tag = match speaker {
            Speaker::User => "to you",
            Speaker::Assistant => "you",
        };
        render(writeln!(out, "[{tag}] {text}"))?;
    }
    render(write!(out, "your reply> "))?;
    render(out.flush())?;

    let mut line = String::new();
    let read = input
        .read_line(&mut line)
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if read == 0 {
        return Err(BackendError::Transport("end of input".to_string()));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

/// Backend wiring `console_respond` to stdin/stdout. Serial by nature:
/// one human, one prompt at a time.
#[derive(Debug, Default)]
pub struct ConsoleBackend;

impl Backend for ConsoleBackend {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        let stdin = std::io::stdin();
        let mut input = stdin.lock();
        let mut out = std::io::stdout();
        console_respond(conversation, &mut input, &mut out)
    }

    fn serial(&self) -> bool {
        true
    }
}
