use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::corpus::Document;
use crate::util::{rng, shuffle};

/// Recorded in every diversity report.
pub const BIGRAM_TOKENIZATION: &str =
    "lowercase, split on Unicode whitespace, punctuation kept; bigrams never cross documents";

pub fn bigram_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Incremental set of distinct word bigrams. Words are interned so each
/// bigram is a pair of 32-bit ids.
#[derive(Debug, Default)]
pub struct BigramCounter {
    vocab: HashMap<String, u32>,
    seen: HashSet<u64>,
}

impl BigramCounter {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.vocab.get(w) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.vocab.insert(w.to_string(), id);
        id
    }

    pub fn add_document(&mut self, text: &str) {
        let lower = text.to_lowercase();
        let mut prev: Option<u32> = None;
        for w in lower.split_whitespace() {
            let id = self.intern(w);
            if let Some(p) = prev {
                self.seen.insert(((p as u64) << 32) | id as u64);
            }
            prev = Some(id);
        }
    }

    pub fn count(&self) -> u64 {
        self.seen.len() as u64
    }
}

pub fn unique_bigrams(docs: &[Document]) -> u64 {
    let mut c = BigramCounter::new();
    for d in docs {
        c.add_document(&d.text);
    }
    c.count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveAxis {
    Documents,
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Requested size, in documents or tokens depending on the axis.
    pub sample_size: u64,
    pub unique_bigrams: u64,
    pub documents: u64,
    pub realized_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiversityCurve {
    pub axis: CurveAxis,
    pub seed: u64,
    pub tokenization: String,
    pub points: Vec<CurvePoint>,
}

/// Unique-bigram counts over nested random samples: one seeded permutation
/// of the corpus, cut at each requested size. On the token axis whole
/// documents are added until the quota is reached or first exceeded.
pub fn diversity_curve(
    docs: &[Document],
    axis: CurveAxis,
    sizes: &[u64],
    seed: u64,
) -> Result<DiversityCurve, AnalysisError> {
    if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::InvalidSizes);
    }
    let available = match axis {
        CurveAxis::Documents => docs.len() as u64,
        CurveAxis::Tokens => docs.iter().map(|d| d.token_count).sum(),
    };
    let largest = *sizes.last().unwrap();
    if largest > available {
        return Err(AnalysisError::SampleTooLarge {
            size: largest,
            available,
        });
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    shuffle(&mut order, &mut rng(seed));

    let mut counter = BigramCounter::new();
    let mut used = 0usize;
    let mut tokens = 0u64;
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let reached = |used: usize, tokens: u64| match axis {
            CurveAxis::Documents => used as u64 >= size,
            CurveAxis::Tokens => tokens >= size,
        };
        while !reached(used, tokens) {
            let d = &docs[order[used]];
            counter.add_document(&d.text);
            tokens += d.token_count;
            used += 1;
        }
        points.push(CurvePoint {
            sample_size: size,
            unique_bigrams: counter.count(),
            documents: used as u64,
            realized_tokens: tokens,
        });
    }
    Ok(DiversityCurve {
        axis,
        seed,
        tokenization: BIGRAM_TOKENIZATION.to_string(),
        points,
    })
}

/// The first `n` documents of the permutation [`diversity_curve`] uses for `seed`.
pub fn nested_sample(docs: &[Document], n: usize, seed: u64) -> Vec<Document> {
    let mut order: Vec<usize> = (0..docs.len()).collect();
    shuffle(&mut order, &mut rng(seed));
    order[..n].iter().map(|&i| docs[i].clone()).collect()
}
