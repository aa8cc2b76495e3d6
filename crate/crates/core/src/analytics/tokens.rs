use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{Dataset, EvalSlice};

/// Lowercased whitespace tokens with leading/trailing punctuation removed.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(|raw| {
        let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
        (!t.is_empty()).then(|| t.to_lowercase())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStat {
    pub token: String,
    pub slice_freq: f64,
    pub overall_freq: f64,
    pub ratio: f64,
    /// The token never occurs in the overall corpus; the denominator was
    /// floored to one occurrence.
    pub floored: bool,
}

fn count_tokens<'a>(texts: impl Iterator<Item = &'a str>) -> (HashMap<String, usize>, usize) {
    let mut counts = HashMap::new();
    let mut total = 0;
    for text in texts {
        for tok in tokenize(text) {
            *counts.entry(tok).or_insert(0) += 1;
            total += 1;
        }
    }
    (counts, total)
}

/// Token frequencies inside `slice` relative to the whole dataset, the
/// `top_n` highest ratios first (then higher slice frequency, then token).
pub fn token_stats(dataset: &Dataset, slice: &EvalSlice, top_n: usize) -> Vec<TokenStat> {
    let (slice_counts, slice_total) =
        count_tokens(slice.members().iter().map(|&i| dataset.records[i].text.as_str()));
    let (overall_counts, overall_total) =
        count_tokens(dataset.records.iter().map(|r| r.text.as_str()));
    if slice_total == 0 {
        return Vec::new();
    }
    let overall_total = overall_total.max(1) as f64;
    let mut rows: Vec<TokenStat> = slice_counts
        .into_iter()
        .map(|(token, c)| {
            let overall = overall_counts.get(&token).copied().unwrap_or(0);
            let slice_freq = c as f64 / slice_total as f64;
            let overall_freq = overall.max(1) as f64 / overall_total;
            TokenStat {
                ratio: slice_freq / overall_freq,
                token,
                slice_freq,
                overall_freq,
                floored: overall == 0,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.ratio
            .total_cmp(&a.ratio)
            .then(b.slice_freq.total_cmp(&a.slice_freq))
            .then_with(|| a.token.cmp(&b.token))
    });
    rows.truncate(top_n);
    rows
}
