//! Offline labeler: the top TF-IDF tokens of the documents in the prompt.

use std::collections::{BTreeMap, HashSet};

use super::prompt::parse_prompt;
use super::{ClientError, LabelingClient};
use crate::analytics::tokenize;

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "do", "does", "doing", "don't", "down", "during", "each",
    "even", "few", "for", "from", "further", "get", "got", "had", "has", "have", "having", "he",
    "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "i'm", "i've", "if",
    "in", "into", "is", "it", "it's", "its", "itself", "just", "me", "more", "most", "my",
    "myself", "no", "nor", "not", "now", "of", "off", "on", "once", "one", "only", "or", "other",
    "our", "ours", "ourselves", "out", "over", "own", "really", "same", "she", "should", "so",
    "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
    "us", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom",
    "why", "will", "with", "would", "you", "your", "yours", "yourself", "yourselves",
];

/// Label returned when the documents contain no content tokens.
pub const EMPTY_LABEL: &str = "unlabeled";

/// Deterministic labeler for offline runs and tests.
///
/// Each document in the prompt is tokenized (lowercase, punctuation
/// stripped), stopwords and single-character tokens are dropped, and every
/// token is scored `tf * (ln((1 + N) / (1 + df)) + 1)` with `tf` its count
/// across all `N` documents and `df` the number of documents containing it.
/// The label is the three best tokens (ties by token) joined by spaces.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubClient {
    pub top: usize,
}

impl StubClient {
    pub fn new() -> Self {
        StubClient { top: 3 }
    }

    pub fn label_documents<S: AsRef<str>>(&self, documents: &[S]) -> String {
        let stop: HashSet<&str> = STOPWORDS.iter().copied().collect();
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in documents {
            let mut seen = HashSet::new();
            for tok in tokenize(doc.as_ref()) {
                if tok.chars().count() < 2 || stop.contains(tok.as_str()) {
                    continue;
                }
                *tf.entry(tok.clone()).or_insert(0) += 1;
                if seen.insert(tok.clone()) {
                    *df.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let n = documents.len() as f64;
        let mut scored: Vec<(f64, String)> = tf
            .into_iter()
            .map(|(tok, count)| {
                let idf = ((1.0 + n) / (1.0 + df[&tok] as f64)).ln() + 1.0;
                (count as f64 * idf, tok)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let top = if self.top == 0 { 3 } else { self.top };
        let words: Vec<String> = scored.into_iter().take(top).map(|(_, t)| t).collect();
        if words.is_empty() {
            EMPTY_LABEL.to_string()
        } else {
            words.join(" ")
        }
    }
}

impl LabelingClient for StubClient {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        Ok(match parse_prompt(prompt) {
            Some((_, docs)) => self.label_documents(&docs),
            None => self.label_documents(&[prompt]),
        })
    }
}
