mod common;

use std::collections::HashSet;

use common::{random_docs, tree};
use recycle_core::corpus::{read_documents, write_corpus, WriteOptions};
use recycle_core::rewrite::mock::{MockConfig, MockServer};
use recycle_core::rewrite::{
    contains_tag, read_failures, read_ledger, rewrite_corpus, GenerationConfig, LedgerStatus,
    RewriteError, RewriteOptions, FAILURES_FILE, LEDGER_FILE,
};
use recycle_core::{CorpusManifest, Document, SourceTag};

fn input(dir: &std::path::Path, n: usize) -> (CorpusManifest, Vec<Document>) {
    let docs = random_docs(n, 42, 5..60);
    let m = write_corpus(&dir.join("in"), "in", "ws", &docs, &WriteOptions::default()).unwrap();
    (m, docs)
}

fn gen(server: &MockServer, concurrency: usize) -> GenerationConfig {
    GenerationConfig {
        endpoint_url: server.url(),
        max_concurrency: concurrency,
        retry_limit: 2,
        backoff_base_ms: 1,
        backoff_cap_ms: 5,
        request_timeout_secs: 10,
        ..Default::default()
    }
}

fn opts(resume: bool) -> RewriteOptions {
    RewriteOptions {
        resume,
        corpus_name: None,
        write: WriteOptions::default(),
    }
}

#[test]
fn hundred_docs_bijective_and_clean() {
    let dir = tempfile::tempdir().unwrap();
    let (m, docs) = input(dir.path(), 100);
    let server = MockServer::start(MockConfig::default()).unwrap();
    let out = dir.path().join("out");
    let s = rewrite_corpus(&m, &gen(&server, 8), &out, &opts(false)).unwrap();
    assert_eq!((s.rewritten, s.failed), (100, 0));
    let got = read_documents(&s.manifest).unwrap();
    let ids: Vec<&str> = got.iter().map(|d| d.id.as_str()).collect();
    let want: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids, want, "same ids, same order");
    for d in &got {
        assert_eq!(d.source_tag, SourceTag::Rewritten);
        assert!(!contains_tag(&d.text), "{}", d.id);
        assert_eq!(d.token_count, d.text.split_whitespace().count() as u64);
        assert_eq!(d.metadata.get("finish_reason").map(String::as_str), Some("stop"));
        assert_eq!(d.metadata.get("rewrite_prompt_version").map(String::as_str), Some("v1"));
    }
    let ledger = read_ledger(&out.join(LEDGER_FILE)).unwrap();
    assert_eq!(ledger.len(), 100);
    assert!(ledger.values().all(|e| e.status == LedgerStatus::Completed && e.attempt_count == 1));
    assert_eq!(server.chat_requests(), 100);
}

#[test]
fn persistent_500_exhausts_retries_for_one_id() {
    let dir = tempfile::tempdir().unwrap();
    let (m, docs) = input(dir.path(), 100);
    let victim = &docs[37];
    let server = MockServer::start(MockConfig {
        fail_texts: [victim.text.clone()].into(),
        ..Default::default()
    })
    .unwrap();
    let cfg = gen(&server, 4);
    let out = dir.path().join("out");
    let s = rewrite_corpus(&m, &cfg, &out, &opts(false)).unwrap();
    assert_eq!((s.rewritten, s.failed), (99, 1));
    let fails = read_failures(&out.join(FAILURES_FILE)).unwrap();
    assert_eq!(fails.len(), 1);
    assert_eq!(fails[0].doc_id, victim.id);
    assert_eq!(fails[0].attempt_count, cfg.retry_limit + 1);
    assert_eq!(fails[0].last_http_status, Some(500));
    let ids: HashSet<String> = read_documents(&s.manifest).unwrap().into_iter().map(|d| d.id).collect();
    assert_eq!(ids.len(), 99);
    assert!(!ids.contains(&victim.id));
}

#[test]
fn random_failures_then_resume_completes_exactly_the_failed_set() {
    let dir = tempfile::tempdir().unwrap();
    let (m, docs) = input(dir.path(), 100);
    let server = MockServer::start(MockConfig {
        fail_fraction: 0.05,
        fail_seed: 7,
        ..Default::default()
    })
    .unwrap();
    let cfg = gen(&server, 16);
    let out = dir.path().join("out");
    let first = rewrite_corpus(&m, &cfg, &out, &opts(false)).unwrap();
    assert!(first.failed > 0, "fixture should inject some failures");

    let all: HashSet<String> = docs.iter().map(|d| d.id.clone()).collect();
    let done: HashSet<String> = read_documents(&first.manifest).unwrap().into_iter().map(|d| d.id).collect();
    let failed: HashSet<String> = read_failures(&out.join(FAILURES_FILE)).unwrap().into_iter().map(|f| f.doc_id).collect();
    assert!(done.is_disjoint(&failed));
    assert_eq!(&done | &failed, all);

    server.set_failures_enabled(false);
    let before = server.chat_requests();
    let second = rewrite_corpus(&m, &cfg, &out, &opts(true)).unwrap();
    assert_eq!(server.chat_requests() - before, failed.len() as u64, "only the failed set is retried");
    assert_eq!((second.rewritten, second.failed), (100, 0));
    assert_eq!(second.resumed, done.len() as u64);
    assert!(read_failures(&out.join(FAILURES_FILE)).unwrap().is_empty());

    // the resumed result equals a clean run
    let clean = dir.path().join("clean");
    rewrite_corpus(&m, &cfg, &clean, &opts(false)).unwrap();
    assert_eq!(
        read_documents(&second.manifest).unwrap(),
        read_documents(&CorpusManifest::load(&clean).unwrap()).unwrap()
    );
}

#[test]
fn output_independent_of_concurrency() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = input(dir.path(), 60);
    let server = MockServer::start(MockConfig {
        max_latency_ms: 15,
        fail_fraction: 0.1,
        fail_seed: 1,
        ..Default::default()
    })
    .unwrap();
    let mut trees = Vec::new();
    for c in [1, 4, 16] {
        let out = dir.path().join(format!("c{c}"));
        rewrite_corpus(&m, &gen(&server, c), &out, &opts(false)).unwrap();
        trees.push(tree(&out));
    }
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[0], trees[2]);
}

#[test]
fn untagged_completions_become_failures() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = input(dir.path(), 40);
    let server = MockServer::start(MockConfig {
        untagged_fraction: 0.25,
        fail_seed: 3,
        ..Default::default()
    })
    .unwrap();
    let out = dir.path().join("out");
    let s = rewrite_corpus(&m, &gen(&server, 4), &out, &opts(false)).unwrap();
    assert!(s.failed > 0);
    for f in read_failures(&out.join(FAILURES_FILE)).unwrap() {
        assert!(f.reason.contains("improved"), "{}", f.reason);
        assert_eq!(f.attempt_count, 3);
    }
    for d in read_documents(&s.manifest).unwrap() {
        assert!(!contains_tag(&d.text));
    }
}

#[test]
fn unreachable_endpoint_and_request_cap() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = input(dir.path(), 10);
    // nothing listens on a port we just released
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = GenerationConfig {
        endpoint_url: format!("http://127.0.0.1:{port}"),
        retry_limit: 1,
        backoff_base_ms: 1,
        backoff_cap_ms: 2,
        ..Default::default()
    };
    let err = rewrite_corpus(&m, &cfg, &dir.path().join("a"), &opts(false)).unwrap_err();
    assert!(matches!(err, RewriteError::EndpointUnreachable(_)), "{err}");

    let server = MockServer::start(MockConfig::default()).unwrap();
    let cfg = GenerationConfig {
        max_requests: Some(4),
        ..gen(&server, 1)
    };
    let err = rewrite_corpus(&m, &cfg, &dir.path().join("b"), &opts(false)).unwrap_err();
    assert!(matches!(err, RewriteError::BudgetExceeded { cap: 4, .. }), "{err}");
}
