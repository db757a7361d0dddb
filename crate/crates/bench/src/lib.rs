//! Synthetic inputs shared by the benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;
use recycle_core::classifier::ScoredDocument;
use recycle_core::util::rng;
use recycle_core::{Document, Tokenizer};

const WORDS: &[&str] = &[
    "the", "model", "data", "quality", "of", "text", "web", "page", "learn", "train", "token",
    "signal", "noise", "filter", "score", "rank", "mix", "source", "epoch", "budget", "rewrite",
    "clear", "detail", "topic", "result", "method", "sample", "corpus", "click", "here",
];

pub fn synthetic_docs(n: usize, words_per_doc: usize, seed: u64) -> Vec<Document> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let len = r.random_range(words_per_doc / 2..=words_per_doc * 3 / 2);
            let text: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut r).unwrap()).collect();
            Document::new(format!("doc{i:07}"), text.join(" "), &Tokenizer::Whitespace)
        })
        .collect()
}

pub fn synthetic_scores(n: usize, seed: u64) -> Vec<ScoredDocument> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| ScoredDocument {
            doc_id: format!("doc{i:07}"),
            score: r.random::<f64>(),
            classifier_id: "bench".into(),
        })
        .collect()
}

pub fn random_pairs(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let x: f64 = r.random();
            (x, 0.7 * x + 0.3 * r.random::<f64>())
        })
        .collect()
}
