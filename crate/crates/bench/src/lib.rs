//! Seeded inputs shared by the benchmarks.

use rand::Rng;

use errslice_core::model::{Dataset, ExplanationMessage, ExplanationTuple, Record, SizeMode};
use errslice_core::rng::rng_from_seed;

/// `n` records with `dim`-wide embeddings drawn around `groups` centers.
pub fn synthetic_dataset(n: usize, dim: usize, groups: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let centers: Vec<Vec<f64>> = (0..groups)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let records = (0..n)
        .map(|i| {
            let g = i % groups;
            Record {
                id: format!("b{i}"),
                text: format!("group{g} sample {} with some filler words", i % 97),
                label: g % 2,
                prediction: usize::from(rng.random_bool(0.2)) ^ (g % 2),
                loss: rng.random_range(0.0..4.0),
                embedding: centers[g].iter().map(|c| c + rng.random_range(-1.0..1.0)).collect(),
            }
        })
        .collect();
    Dataset {
        name: format!("bench{n}"),
        num_classes: 2,
        embedding_dim: dim,
        records,
    }
}

pub fn random_tuple(k: usize, dw: usize, seed: u64) -> ExplanationTuple {
    let mut rng = rng_from_seed(seed);
    let messages = (0..k)
        .map(|_| {
            let size = rng.random_range(1..1000);
            ExplanationMessage {
                sentence_vector: (0..dw).map(|_| rng.random_range(-1.0..1.0)).collect(),
                size,
                size_fraction: size as f64 / 1000.0,
                accuracy: rng.random_range(0.0..1.0),
                label_text: None,
            }
        })
        .collect();
    ExplanationTuple {
        messages,
        source_clustering_id: "bench".into(),
        size_mode: SizeMode::Fraction,
    }
}

/// `count` documents of `tokens` whitespace tokens each.
pub fn documents(count: usize, tokens: usize) -> Vec<String> {
    (0..count)
        .map(|d| (0..tokens).map(|t| format!("w{}", (d * 31 + t) % 211)).collect::<Vec<_>>().join(" "))
        .collect()
}
