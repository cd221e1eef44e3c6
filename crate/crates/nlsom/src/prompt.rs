//! Prompt templates with angle-bracket placeholders.
//!
//! Templates use the literal form `<key>`; spaces are legal inside a
//! placeholder (`<vqa question>`), so prompts can be copied verbatim from
//! society config files.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unbound placeholder <{0}>")]
    UnboundPlaceholder(String),
}

/// A text template whose `<key>` placeholders are filled at render time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    text: String,
    required_keys: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let required_keys = placeholders(&text);
        Self {
            text,
            required_keys,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn required_keys(&self) -> &BTreeSet<String> {
        &self.required_keys
    }

    /// Replaces every placeholder with its binding in a single left-to-right
    /// pass; substituted text is never re-scanned. Extra bindings are
    /// ignored; a placeholder without a binding is an error naming the key.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some((key, before, after)) = next_placeholder(rest) {
            out.push_str(before);
            match bindings.get(key) {
                Some(value) => out.push_str(value),
                None => return Err(TemplateError::UnboundPlaceholder(key.to_string())),
            }
            rest = after;
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// The set of placeholder names syntactically present in `text`.
pub fn placeholders(text: &str) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    let mut rest = text;
    while let Some((key, _, after)) = next_placeholder(rest) {
        keys.insert(key.to_string());
        rest = after;
    }
    keys
}

/// Finds the next well-formed `<key>` span: returns (key, text before it,
/// text after it). A `<` that never closes, or closes only after another
/// `<`, is treated as literal text.
fn next_placeholder(text: &str) -> Option<(&str, &str, &str)> {
    let mut search_from = 0;
    loop {
        let open = search_from + text[search_from..].find('<')?;
        let tail = &text[open + 1..];
        let i = tail.find(['<', '>'])?;
        if tail.as_bytes()[i] == b'>' {
            if i > 0 {
                let key = &tail[..i];
                return Some((key, &text[..open], &tail[i + 1..]));
            }
            // "<>" is literal; keep scanning after it
            search_from = open + 2;
        } else {
            // nested open: the first `<` was literal
            search_from = open + 1 + i;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn single_substitution() {
        let t = PromptTemplate::new("Question: <q> Answer:");
        assert_eq!(
            t.render(&bind(&[("q", "2+2?")])).unwrap(),
            "Question: 2+2? Answer:"
        );
    }

    #[test]
    fn no_placeholders_is_identity() {
        let t = PromptTemplate::new("no placeholders here (end by ?)");
        assert_eq!(t.required_keys().len(), 0);
        assert_eq!(
            t.render(&BTreeMap::new()).unwrap(),
            "no placeholders here (end by ?)"
        );
    }

    #[test]
    fn execution_template_renders_with_spaces_in_keys() {
        let t = PromptTemplate::new(
            "There is a VQA question: <vqa question>. And It has 4 options <option> \
             Context: <summarization>. Which one do you think is more reasonable? \
             Answer within (a), (b), (c), (d) without explanation.",
        );
        assert_eq!(
            t.required_keys().iter().cloned().collect::<Vec<_>>(),
            vec!["option", "summarization", "vqa question"]
        );
        let out = t
            .render(&bind(&[
                ("vqa question", "What century were these invented in?"),
                ("option", "(a) Nineteenth (b) Twentieth (c) Eighteenth (d) Twenty-first"),
                ("summarization", "The earliest controlled flight took place in 1903."),
            ]))
            .unwrap();
        assert!(out.contains("Which one do you think is more reasonable?"));
        assert!(placeholders(&out).is_empty());
    }

    #[test]
    fn missing_key_names_the_placeholder() {
        let t = PromptTemplate::new("<a> and <b>");
        let err = t.render(&bind(&[("a", "x")])).unwrap_err();
        assert_eq!(err, TemplateError::UnboundPlaceholder("b".to_string()));
    }

    #[test]
    fn extra_keys_ignored() {
        let t = PromptTemplate::new("<a>");
        assert_eq!(t.render(&bind(&[("a", "x"), ("zzz", "y")])).unwrap(), "x");
    }

    #[test]
    fn unclosed_bracket_is_literal() {
        let t = PromptTemplate::new("3 < 4 and <key> stays");
        assert_eq!(
            t.required_keys().iter().cloned().collect::<Vec<_>>(),
            vec!["key"]
        );
        assert_eq!(t.render(&bind(&[("key", "k")])).unwrap(), "3 < 4 and k stays");
    }

    proptest! {
        // Complete bindings leave no placeholder syntax in the output.
        #[test]
        fn render_clears_all_placeholders(
            keys in proptest::collection::btree_set("[a-z ]{1,12}", 0..5),
            values in proptest::collection::vec("[a-zA-Z0-9,. ]{0,20}", 5),
            filler in "[a-zA-Z0-9,. ]{0,30}",
        ) {
            let mut text = filler.clone();
            for k in &keys {
                text.push('<');
                text.push_str(k);
                text.push('>');
                text.push_str(&filler);
            }
            let t = PromptTemplate::new(&text);
            prop_assert_eq!(t.required_keys(), &keys);
            let bindings: BTreeMap<String, String> = keys
                .iter()
                .cloned()
                .zip(values.iter().cloned())
                .collect();
            let out = t.render(&bindings).unwrap();
            prop_assert!(placeholders(&out).is_empty());
        }

        // required_keys always equals the syntactic placeholder set.
        #[test]
        fn required_keys_matches_syntax(text in "[a-z<> ]{0,60}") {
            let t = PromptTemplate::new(&text);
            prop_assert_eq!(t.required_keys(), &placeholders(&text));
        }
    }
}
