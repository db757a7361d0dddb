#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recycle_core::classifier::{train, TrainConfig, TrainSet};
use recycle_core::{Document, Tokenizer};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn words(r: &mut ChaCha8Rng, prefix: &str, vocab: usize, n: usize) -> String {
    (0..n)
        .map(|_| format!("{prefix}{}", r.random_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn random_docs(n: usize, seed: u64, len: std::ops::Range<usize>) -> Vec<Document> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let k = r.random_range(len.clone());
            Document::new(format!("d{i:06}"), words(&mut r, "w", 300, k), &Tokenizer::Whitespace)
        })
        .collect()
}

pub fn write_jsonl(path: &Path, records: &[serde_json::Value]) {
    let mut f = std::fs::File::create(path).unwrap();
    for r in records {
        serde_json::to_writer(&mut f, r).unwrap();
        f.write_all(b"\n").unwrap();
    }
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn recycle(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recycle"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn recycle")
}

pub const PLANTED_DUPLICATES: usize = 5;
pub const PLANTED_REPETITIVE: usize = 4;

/// A toy crawl of `n` records in total: ordinary pages drawn from two
/// vocabularies, a few exact duplicates under fresh ids (with whitespace and
/// case noise) and a few pages made of one line repeated.
pub fn toy_corpus(dir: &Path, n: usize) -> PathBuf {
    let mut r = rng(2024);
    let base = n - PLANTED_DUPLICATES - PLANTED_REPETITIVE;
    let mut recs = Vec::with_capacity(n);
    for i in 0..base {
        let len = r.random_range(60..160);
        let vocab = if r.random_bool(0.5) { "good" } else { "plain" };
        let paras: Vec<String> = (0..3).map(|_| words(&mut r, vocab, 400, len / 3)).collect();
        recs.push(serde_json::json!({
            "id": format!("doc{i:05}"),
            "text": paras.join("\n\n"),
            "url": format!("https://site{}.test/page/{i}", i % 11),
        }));
    }
    for i in 0..PLANTED_DUPLICATES {
        let t = recs[i * 7]["text"].as_str().unwrap().to_uppercase().replace("\n\n", "  \n\n ");
        recs.push(serde_json::json!({"id": format!("dup{i}"), "text": t}));
    }
    for i in 0..PLANTED_REPETITIVE {
        let line = words(&mut r, "spam", 60, 10);
        recs.push(serde_json::json!({"id": format!("rep{i}"), "text": vec![line; 10].join("\n")}));
    }
    let data = dir.join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_jsonl(&data.join("crawl-00.jsonl"), &recs[..n / 2]);
    write_jsonl(&data.join("crawl-01.jsonl"), &recs[n / 2..]);
    data
}

/// Train a small quality classifier that prefers the "good" vocabulary.
pub fn toy_classifier(path: &Path) {
    let mut r = rng(99);
    let mut mk = |prefix: &str, tag: &str| -> Vec<Document> {
        (0..300)
            .map(|i| Document::new(format!("{tag}{i}"), words(&mut r, prefix, 400, 50), &Tokenizer::Whitespace))
            .collect()
    };
    let pos = mk("good", "p");
    let neg = mk("plain", "n");
    let hyper = TrainConfig {
        bucket_count: 1 << 15,
        embedding_dim: 8,
        learning_rate: 0.2,
        epochs: 3,
    };
    let model = train(&TrainSet { positives: pos, negatives: neg, seed: 5 }, &hyper).unwrap();
    model.save(path).unwrap();
}

pub fn pipeline_config(dir: &Path, name: &str, output_root: &str, endpoint: &str) -> PathBuf {
    let cfg = format!(
        r#"seed = 11
output_root = "{output_root}"
inputs = ["data/*.jsonl"]
corpus_name = "toy"
docs_per_shard = 128

[filter]
min_tokens = 30

[raw]
classifier = "quality.qcls"
top_fraction = 0.10

[rewritten]
classifier = "quality.qcls"
top_fraction = 0.10

[generation]
endpoint_url = "{endpoint}"
max_concurrency = 8
retry_limit = 2
backoff_base_ms = 1
backoff_cap_ms = 5

[mix]
raw_weight = 0.5
rewritten_weight = 0.5
target_max_epochs = 2.0
"#
    );
    let path = dir.join(name);
    std::fs::write(&path, cfg).unwrap();
    path
}
