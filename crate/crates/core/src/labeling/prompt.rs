//! Zero-shot group-labeling prompt and its token budget.

use serde::{Deserialize, Serialize};

const INSTRUCTION_HEAD: &str = "In this task, we`ll assign a short and precise label to a group of documents based on the topics or concepts most relevant to these documents. The documents are all subsets of a ";
const INSTRUCTION_TAIL: &str = " dataset.";
const BULLET: &str = "- ";
const SEPARATOR: &str = "\n - ";
pub const PROMPT_SUFFIX: &str = "\n Group label:";

pub const DEFAULT_MAX_TOKENS: usize = 4000;
pub const MIN_MAX_TOKENS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    /// Task name substituted into the instruction, e.g. "sentiment classification".
    pub task: String,
    /// Budget in whitespace-delimited tokens.
    pub max_tokens: usize,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec {
            task: "sentiment classification".to_string(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("cannot build a prompt from zero documents")]
    EmptyContents,
}

pub fn instruction(task: &str) -> String {
    format!("{INSTRUCTION_HEAD}{task}{INSTRUCTION_TAIL}")
}

/// `instruction + "- " + contents.join("\n - ") + "\n Group label:"`.
pub fn build_prompt<S: AsRef<str>>(contents: &[S], task: &str) -> Result<String, PromptError> {
    if contents.is_empty() {
        return Err(PromptError::EmptyContents);
    }
    let mut prompt = instruction(task);
    prompt.push_str(BULLET);
    for (i, doc) in contents.iter().enumerate() {
        if i > 0 {
            prompt.push_str(SEPARATOR);
        }
        prompt.push_str(doc.as_ref());
    }
    prompt.push_str(PROMPT_SUFFIX);
    Ok(prompt)
}

/// Whitespace-delimited token count.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Splits a prompt built by [`build_prompt`] back into `(task, documents)`.
pub fn parse_prompt(prompt: &str) -> Option<(&str, Vec<&str>)> {
    let rest = prompt.strip_prefix(INSTRUCTION_HEAD)?;
    let rest = rest.strip_suffix(PROMPT_SUFFIX)?;
    let marker = format!("{INSTRUCTION_TAIL}{BULLET}");
    let at = rest.find(&marker)?;
    let task = &rest[..at];
    let body = &rest[at + marker.len()..];
    Some((task, body.split(SEPARATOR).collect()))
}

/// Keeps the longest prefix of `contents` whose prompt fits `max_tokens`.
/// Documents are only ever dropped whole from the end; when not even the
/// first one fits, it is cut to the tokens that remain after the instruction
/// and suffix. If the instruction and suffix alone exceed the budget the
/// first document is cut to nothing.
pub fn truncate_documents<S: AsRef<str>>(contents: &[S], task: &str, max_tokens: usize) -> Vec<String> {
    let owned: Vec<String> = contents.iter().map(|s| s.as_ref().to_string()).collect();
    if owned.is_empty() {
        return owned;
    }
    let fits = |keep: usize| {
        build_prompt(&owned[..keep], task)
            .map(|p| count_tokens(&p) <= max_tokens)
            .unwrap_or(false)
    };
    if fits(owned.len()) {
        return owned;
    }
    // token count grows with every added document, so the predicate is monotone
    let keep = (1..owned.len()).collect::<Vec<_>>().partition_point(|&k| fits(k));
    if keep >= 1 {
        return owned[..keep].to_vec();
    }
    let overhead = count_tokens(&build_prompt(&[""], task).expect("non-empty"));
    let allowed = max_tokens.saturating_sub(overhead);
    let cut: Vec<&str> = owned[0].split_whitespace().take(allowed).collect();
    vec![cut.join(" ")]
}

/// Truncates a prompt to `max_tokens` whitespace tokens, preserving the
/// instruction and the trailing `"\n Group label:"`.
pub fn truncate_tokens(prompt: &str, max_tokens: usize) -> String {
    if count_tokens(prompt) <= max_tokens {
        return prompt.to_string();
    }
    match parse_prompt(prompt) {
        Some((task, docs)) => {
            let kept = truncate_documents(&docs, task, max_tokens);
            build_prompt(&kept, task).expect("at least one document kept")
        }
        None => {
            // not one of ours: keep the leading tokens and the suffix
            let body = prompt.strip_suffix(PROMPT_SUFFIX).unwrap_or(prompt);
            let allowed = max_tokens.saturating_sub(count_tokens(PROMPT_SUFFIX));
            let mut out = body.split_whitespace().take(allowed).collect::<Vec<_>>().join(" ");
            out.push_str(PROMPT_SUFFIX);
            out
        }
    }
}
