#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recycle_core::{Document, Tokenizer};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` words drawn from a vocabulary of `vocab` synthetic words.
pub fn words(r: &mut ChaCha8Rng, prefix: &str, vocab: usize, n: usize) -> String {
    (0..n)
        .map(|_| format!("{prefix}{}", r.random_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random documents with lengths in `len` (whitespace tokens).
pub fn random_docs(n: usize, seed: u64, len: std::ops::Range<usize>) -> Vec<Document> {
    let mut r = rng(seed);
    let tok = Tokenizer::Whitespace;
    (0..n)
        .map(|i| {
            let k = r.random_range(len.clone());
            Document::new(format!("d{i:06}"), words(&mut r, "w", 300, k), &tok)
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

/// Every file under `root` mapped to its bytes, keyed by relative path.
pub fn tree(root: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
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
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// A small pipeline workspace: input JSONL, a trained classifier and a config
/// whose endpoint is `endpoint`. Returns the config path.
pub fn pipeline_fixture(dir: &Path, endpoint: &str, n: usize) -> std::path::PathBuf {
    use recycle_core::classifier::{train, TrainConfig, TrainSet};

    let mut r = rng(1234);
    let tok = Tokenizer::Whitespace;
    let mut recs = Vec::new();
    for i in 0..n {
        let len = r.random_range(60..140);
        let vocab = if i % 2 == 0 { "good" } else { "plain" };
        let text = words(&mut r, vocab, 150, len);
        recs.push(serde_json::json!({"id": format!("doc{i:04}"), "text": text, "url": format!("https://site{}.test/{i}", i % 7)}));
    }
    // planted exact duplicates under fresh ids
    for i in 0..5 {
        let t = recs[i * 3]["text"].clone();
        recs.push(serde_json::json!({"id": format!("dup{i}"), "text": t}));
    }
    // planted repetitive documents
    for i in 0..4 {
        let line = words(&mut r, "rep", 50, 12);
        recs.push(serde_json::json!({"id": format!("rep{i}"), "text": vec![line; 8].join("\n")}));
    }
    std::fs::create_dir_all(dir.join("data")).unwrap();
    write_jsonl(&dir.join("data/part-0.jsonl"), &recs);

    let mk = |prefix: &str, tag: &str, r: &mut ChaCha8Rng| -> Vec<Document> {
        (0..200)
            .map(|i| Document::new(format!("{tag}{i}"), words(r, prefix, 150, 40), &tok))
            .collect()
    };
    let pos = mk("good", "p", &mut r);
    let neg = mk("plain", "n", &mut r);
    let hyper = TrainConfig {
        bucket_count: 1 << 14,
        embedding_dim: 8,
        learning_rate: 0.2,
        epochs: 3,
    };
    let model = train(&TrainSet { positives: pos, negatives: neg, seed: 1 }, &hyper).unwrap();
    model.save(&dir.join("quality.qcls")).unwrap();

    let cfg = format!(
        r#"seed = 7
output_root = "out"
inputs = ["data/*.jsonl"]
corpus_name = "toy"
docs_per_shard = 64

[filter]
min_tokens = 20

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
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}
