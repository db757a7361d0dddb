use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use recycle_core::analysis::{self, report, Bandwidth, CurveAxis, EmbeddingProvider};
use recycle_core::classifier::{self, ClassifierModel, TrainConfig, TrainSet};
use recycle_core::corpus::{self, CorpusManifest, IngestOptions, WriteOptions};
use recycle_core::filter::{self, FilterConfig};
use recycle_core::mix::{self, MaterializeOptions, MixPlan, SourceBudget};
use recycle_core::pipeline::{self, PipelineConfig, RunOptions, Severity, Stage};
use recycle_core::rewrite::{self, GenerationConfig, RewriteOptions};
use recycle_core::util::read_config;

#[derive(Parser)]
#[command(name = "recycle", version, about = "Filter, rewrite, select and mix web text for pretraining")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ShardArgs {
    /// Documents per output shard.
    #[arg(long, default_value_t = 50_000)]
    docs_per_shard: usize,
    /// Write plain `.jsonl` shards instead of gzip.
    #[arg(long)]
    no_compress: bool,
}

impl ShardArgs {
    fn write_options(&self) -> WriteOptions {
        WriteOptions {
            docs_per_shard: self.docs_per_shard,
            compress: !self.no_compress,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Read JSONL(.gz) files into a sharded corpus with a manifest.
    Ingest {
        /// Input files or glob patterns.
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// `ws` or `subword:<vocab file>`.
        #[arg(long, default_value = "ws")]
        tokenizer: String,
        #[arg(long, default_value = "id")]
        id_field: String,
        #[arg(long, default_value = "ingested")]
        name: String,
        #[command(flatten)]
        shards: ShardArgs,
    },
    /// Drop exact duplicates after normalization.
    Dedup {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        shards: ShardArgs,
    },
    /// Apply the heuristic quality rules.
    Filter {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML/JSON filter thresholds; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write one verdict per document here.
        #[arg(long)]
        audit: Option<PathBuf>,
        #[command(flatten)]
        shards: ShardArgs,
    },
    /// Train the hashed n-gram quality classifier.
    TrainClassifier {
        /// Positive-class corpora; repeat to mix several sources.
        #[arg(long, required = true)]
        positives: Vec<PathBuf>,
        /// Share of each positive source, in order (defaults to equal shares).
        #[arg(long, value_delimiter = ',')]
        positive_proportions: Vec<f64>,
        /// Total positives to draw (defaults to all available).
        #[arg(long)]
        positive_total: Option<usize>,
        #[arg(long, required = true)]
        negatives: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// TOML/JSON hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        buckets: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score every document of a corpus.
    Score {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep the top fraction of a scored pool.
    Select {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        top_fraction: f64,
        /// Rank until the fraction of tokens (not documents) is reached; needs --corpus.
        #[arg(long)]
        by_tokens: bool,
        /// Write the selected ids here, one per line.
        #[arg(long)]
        ids_out: Option<PathBuf>,
        /// Corpus to subset; with --out, writes the selected documents.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        shards: ShardArgs,
    },
    /// Rewrite every document through an OpenAI-compatible endpoint.
    Rewrite {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML/JSON generation settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        max_requests: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the ledger in --out, skipping completed documents.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        shards: ShardArgs,
    },
    /// Materialize a weighted mixture from a plan file.
    Mix {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        allow_cap_violation: bool,
        #[command(flatten)]
        shards: ShardArgs,
    },
    /// Print the epoch plan for a token budget without writing anything.
    Budget {
        /// Plan file; alternatively give --source and --token-budget.
        #[arg(long, conflicts_with = "source")]
        plan: Option<PathBuf>,
        /// `name=tokens` or `name=tokens:weight`; tokens may use exponents (72e9).
        #[arg(long)]
        source: Vec<String>,
        /// Keep this fraction of each source's tokens before planning.
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        token_budget: Option<String>,
        /// Derive the budget from a target epoch count instead.
        #[arg(long, conflicts_with = "token_budget")]
        max_epochs: Option<f64>,
        #[arg(long, default_value_t = 4)]
        max_repeats: u32,
    },
    /// Statistics comparing raw and rewritten text.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Run the full pipeline from one config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of stages.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<Stage>,
        /// Stop after this stage.
        #[arg(long)]
        until: Option<Stage>,
        /// Rerun stages even if they are up to date.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a pipeline config and list every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve deterministic chat and embedding responses for testing.
    MockServer {
        #[arg(long, default_value = "127.0.0.1:8000")]
        addr: String,
        /// Fraction of documents answered with HTTP 500.
        #[arg(long, default_value_t = 0.0)]
        fail_fraction: f64,
        #[arg(long, default_value_t = 0)]
        fail_seed: u64,
        #[arg(long, default_value_t = 0)]
        max_latency_ms: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Documents,
    Tokens,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Rank correlation of raw versus rewritten quality scores.
    Spearman {
        #[arg(long)]
        raw_scores: PathBuf,
        #[arg(long)]
        rewritten_scores: PathBuf,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Unique word-bigram counts over nested random samples.
    Bigrams {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "documents")]
        axis: AxisArg,
        /// Comma-separated, strictly increasing sample sizes (1e6 notation allowed).
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        /// Output file stem.
        #[arg(long, default_value = "bigrams")]
        name: String,
    },
    /// Embedding cosine similarity between two versions of each document.
    Simcse {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// `file:<tsv>` or `http:<endpoint>`.
        #[arg(long)]
        provider: String,
        #[arg(long, default_value = "princeton-nlp/sup-simcse-bert-base-uncased")]
        model: String,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Gaussian kernel density of a list of values.
    Kde {
        /// Scores JSONL, a CSV with --column, or one number per line.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        column: Option<String>,
        /// A positive number or `auto`.
        #[arg(long, default_value = "auto")]
        bandwidth: String,
        #[arg(long, default_value_t = 256)]
        points: usize,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        #[arg(long, default_value = "kde")]
        name: String,
    },
    /// Min, max, mean and median document length in tokens.
    Lengths {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
}

fn parse_count(s: &str) -> Result<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().with_context(|| format!("not a number: `{s}`"))?;
    if !(f.is_finite() && f >= 0.0 && f.fract() == 0.0) {
        bail!("`{s}` is not a non-negative integer");
    }
    Ok(f as u64)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_docs(dir: &Path) -> Result<Vec<corpus::Document>> {
    let m = CorpusManifest::load(dir)?;
    Ok(corpus::read_documents(&m)?)
}

fn expand_globs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        let before = out.len();
        for entry in glob::glob(p).with_context(|| format!("bad pattern `{p}`"))? {
            out.push(entry?);
        }
        if out.len() == before {
            bail!("`{p}` matches no files");
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Ingest {
            inputs,
            out,
            tokenizer,
            id_field,
            name,
            shards,
        } => {
            let files = expand_globs(&inputs)?;
            let opts = IngestOptions {
                tokenizer_id: tokenizer,
                id_field,
                corpus_name: name,
                write: shards.write_options(),
            };
            let r = corpus::ingest(&files, &opts, &out)?;
            if r.skipped > 0 {
                log::warn!("skipped {} malformed records", r.skipped);
            }
            print_json(&r)?;
        }
        Cmd::Dedup { corpus, out, shards } => {
            let m = CorpusManifest::load(&corpus)?;
            print_json(&corpus::deduplicate(&m, &out, &shards.write_options())?)?;
        }
        Cmd::Filter {
            corpus,
            out,
            config,
            audit,
            shards,
        } => {
            let cfg: FilterConfig = match config {
                Some(p) => read_config(&p).map_err(|e| anyhow!(e))?,
                None => FilterConfig::default(),
            };
            let m = CorpusManifest::load(&corpus)?;
            let r = filter::filter_corpus(&m, &cfg, &out, audit.as_deref(), &shards.write_options())?;
            print_json(&r)?;
        }
        Cmd::TrainClassifier {
            positives,
            positive_proportions,
            positive_total,
            negatives,
            out,
            config,
            buckets,
            dim,
            epochs,
            lr,
            seed,
        } => {
            let mut hyper: TrainConfig = match config {
                Some(p) => read_config(&p).map_err(|e| anyhow!(e))?,
                None => TrainConfig::default(),
            };
            if let Some(b) = buckets {
                hyper.bucket_count = b;
            }
            if let Some(d) = dim {
                hyper.embedding_dim = d;
            }
            if let Some(e) = epochs {
                hyper.epochs = e;
            }
            if let Some(l) = lr {
                hyper.learning_rate = l;
            }
            let sources: Vec<Vec<corpus::Document>> =
                positives.iter().map(|p| load_docs(p)).collect::<Result<_>>()?;
            let props = if positive_proportions.is_empty() {
                vec![1.0; sources.len()]
            } else if positive_proportions.len() == sources.len() {
                positive_proportions
            } else {
                bail!("--positive-proportions needs one value per --positives corpus");
            };
            let available: usize = sources.iter().map(Vec::len).sum();
            let total = positive_total.unwrap_or(available);
            let pos = if sources.len() == 1 && total >= available {
                sources.into_iter().next().unwrap_or_default()
            } else {
                classifier::compose_positives(sources, &props, total, seed)
            };
            let mut neg = Vec::new();
            for n in &negatives {
                neg.extend(load_docs(n)?);
            }
            let ts = TrainSet {
                positives: pos,
                negatives: neg,
                seed,
            };
            let model = classifier::train(&ts, &hyper)?;
            model.save_with_sidecar(&out, &ts, &hyper)?;
            print_json(&serde_json::json!({
                "model": out,
                "classifier_id": model.id(),
                "positives": ts.positives.len(),
                "negatives": ts.negatives.len(),
            }))?;
        }
        Cmd::Score { corpus, model, out } => {
            let model = ClassifierModel::load(&model)?;
            let m = CorpusManifest::load(&corpus)?;
            let scores = classifier::score_corpus(&model, &m)?;
            classifier::write_scores(&out, &scores)?;
            eprintln!("scored {} documents with {}", scores.len(), model.id());
        }
        Cmd::Select {
            scores,
            top_fraction,
            by_tokens,
            ids_out,
            corpus,
            out,
            shards,
        } => {
            let scored = classifier::read_scores(&scores)?;
            let manifest = corpus.as_deref().map(CorpusManifest::load).transpose()?;
            let ids = if by_tokens {
                let m = manifest.as_ref().ok_or_else(|| anyhow!("--by-tokens needs --corpus"))?;
                let tokens: HashMap<String, u64> =
                    corpus::read_documents(m)?.into_iter().map(|d| (d.id, d.token_count)).collect();
                classifier::select_top_token_fraction(&scored, &tokens, top_fraction)?
            } else {
                classifier::select_top_fraction(&scored, top_fraction)?
            };
            if let Some(p) = &ids_out {
                let mut text = ids.join("\n");
                text.push('\n');
                std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            }
            match (&manifest, &out) {
                (Some(m), Some(out)) => {
                    let keep: HashSet<String> = ids.iter().cloned().collect();
                    let name = format!("{}-selected", m.corpus_name);
                    let sub = corpus::subset_corpus(m, &keep, out, &name, &shards.write_options())?;
                    eprintln!("selected {} of {} documents into {}", sub.document_count, scored.len(), out.display());
                }
                (None, Some(_)) => bail!("--out needs --corpus"),
                _ => {
                    if ids_out.is_none() {
                        for id in &ids {
                            println!("{id}");
                        }
                    }
                }
            }
        }
        Cmd::Rewrite {
            corpus,
            out,
            config,
            endpoint,
            model,
            concurrency,
            max_requests,
            seed,
            resume,
            shards,
        } => {
            let mut cfg: GenerationConfig = match config {
                Some(p) => read_config(&p).map_err(|e| anyhow!(e))?,
                None => GenerationConfig::default(),
            };
            if let Some(e) = endpoint {
                cfg.endpoint_url = e;
            }
            if let Some(m) = model {
                cfg.model_name = m;
            }
            if let Some(c) = concurrency {
                cfg.max_concurrency = c;
            }
            if max_requests.is_some() {
                cfg.max_requests = max_requests;
            }
            if seed.is_some() {
                cfg.seed = seed;
            }
            let m = CorpusManifest::load(&corpus)?;
            let opts = RewriteOptions {
                resume,
                corpus_name: None,
                write: shards.write_options(),
            };
            print_json(&rewrite::rewrite_corpus(&m, &cfg, &out, &opts)?)?;
        }
        Cmd::Mix {
            plan,
            out,
            seed,
            allow_cap_violation,
            shards,
        } => {
            let mut p = MixPlan::load(&plan)?;
            if let Some(s) = seed {
                p.seed = s;
            }
            let opts = MaterializeOptions {
                allow_cap_violation,
                corpus_name: None,
                write: shards.write_options(),
            };
            print_json(&mix::materialize(&p, &out, &opts)?)?;
        }
        Cmd::Budget {
            plan,
            source,
            k,
            token_budget,
            max_epochs,
            max_repeats,
        } => return budget(plan, source, k, token_budget, max_epochs, max_repeats),
        Cmd::Analyze(a) => analyze(a)?,
        Cmd::Run {
            config,
            stages,
            until,
            force,
            seed,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let opts = RunOptions {
                stages: (!stages.is_empty()).then_some(stages),
                until,
                force,
            };
            match pipeline::run_pipeline(&cfg, &opts) {
                Ok(outcome) => {
                    if let Some(b) = &outcome.budget {
                        print_json(b)?;
                    }
                    for s in &outcome.stages {
                        eprintln!("{:<17} {:?}", s.stage.name(), s.status);
                    }
                }
                Err(e @ pipeline::PipelineError::ConfigInvalid(_)) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Cmd::Validate { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let diags = cfg.validate();
            for d in &diags {
                println!("{d}");
            }
            if diags.iter().any(|d| d.severity == Severity::Error) {
                return Ok(ExitCode::from(2));
            }
            if diags.is_empty() {
                println!("ok");
            }
        }
        Cmd::MockServer {
            addr,
            fail_fraction,
            fail_seed,
            max_latency_ms,
        } => {
            let cfg = rewrite::mock::MockConfig {
                fail_fraction,
                fail_seed,
                max_latency_ms,
                ..Default::default()
            };
            let server = rewrite::mock::MockServer::start_on(cfg, &addr)?;
            println!("{}", server.url());
            loop {
                std::thread::park();
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn budget(
    plan: Option<PathBuf>,
    source: Vec<String>,
    k: Option<f64>,
    token_budget: Option<String>,
    max_epochs: Option<f64>,
    max_repeats: u32,
) -> Result<ExitCode> {
    let mut sources = Vec::new();
    let mut budget = token_budget.as_deref().map(parse_count).transpose()?;
    let mut repeats = max_repeats;
    if let Some(p) = plan {
        let p = MixPlan::load(&p)?;
        sources = p.budgets();
        budget = budget.or(Some(p.token_budget));
        repeats = p.max_repeats;
    }
    for s in &source {
        let (name, rest) = s.split_once('=').ok_or_else(|| anyhow!("expected name=tokens[:weight], got `{s}`"))?;
        let (tokens, weight) = match rest.split_once(':') {
            Some((t, w)) => (t, Some(w.parse::<f64>().with_context(|| format!("bad weight in `{s}`"))?)),
            None => (rest, None),
        };
        sources.push(SourceBudget {
            name: name.into(),
            unique_tokens: parse_count(tokens)?,
            weight,
        });
    }
    if sources.is_empty() {
        bail!("give --plan or at least one --source");
    }
    let mut selected = BTreeMap::new();
    if let Some(k) = k {
        for s in &mut sources {
            s.unique_tokens = mix::selected_pool_tokens(s.unique_tokens, k)
                .ok_or_else(|| anyhow!("invalid fraction {k}"))?;
            selected.insert(s.name.clone(), s.unique_tokens);
        }
    }
    let t = match (budget, max_epochs) {
        (Some(t), _) => t,
        (None, Some(e)) => mix::budget_for_max_epochs(&sources, e)?,
        (None, None) => bail!("give --token-budget or --max-epochs"),
    };
    let report = mix::plan_budget(&sources, t, repeats)?;
    if !selected.is_empty() {
        eprintln!("selected tokens: {}", serde_json::to_string(&selected)?);
    }
    print_json(&report)?;
    if report.cap_violated {
        eprintln!(
            "warning: the plan repeats data {:.3} times, above the cap of {}",
            report.max_epochs, report.max_repeats
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn read_values(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let name = path.to_string_lossy();
    if name.ends_with(".jsonl") {
        return Ok(classifier::read_scores(path)?.into_iter().map(|s| s.score).collect());
    }
    if name.ends_with(".csv") {
        let col = column.ok_or_else(|| anyhow!("CSV input needs --column"))?;
        let rows: Vec<HashMap<String, String>> = report::read_csv(path)?;
        return rows
            .iter()
            .map(|r| {
                r.get(col)
                    .ok_or_else(|| anyhow!("no column `{col}`"))?
                    .parse::<f64>()
                    .map_err(Into::into)
            })
            .collect();
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().with_context(|| format!("bad number `{l}`")))
        .collect()
}

fn analyze(cmd: AnalyzeCmd) -> Result<()> {
    let written = match cmd {
        AnalyzeCmd::Spearman {
            raw_scores,
            rewritten_scores,
            out,
        } => {
            let raw = classifier::read_scores(&raw_scores)?;
            let rw = classifier::read_scores(&rewritten_scores)?;
            let pairs = analysis::pair_scores(&raw, &rw);
            let res = analysis::spearman(&pairs)?;
            println!("n={} rho={:.6} p={:.6e}", res.n, res.rho, res.p_value);
            report::write_spearman(&out, &res, &pairs)?
        }
        AnalyzeCmd::Bigrams {
            corpus,
            axis,
            sizes,
            seed,
            out,
            name,
        } => {
            let docs = load_docs(&corpus)?;
            let sizes: Vec<u64> = sizes.iter().map(|s| parse_count(s)).collect::<Result<_>>()?;
            let axis = match axis {
                AxisArg::Documents => CurveAxis::Documents,
                AxisArg::Tokens => CurveAxis::Tokens,
            };
            let curve = analysis::diversity_curve(&docs, axis, &sizes, seed)?;
            for p in &curve.points {
                println!("{}\t{}", p.sample_size, p.unique_bigrams);
            }
            report::write_curve(&out, &name, &curve)?
        }
        AnalyzeCmd::Simcse {
            a,
            b,
            provider,
            model,
            out,
        } => {
            let p: Box<dyn EmbeddingProvider> = if let Some(f) = provider.strip_prefix("file:") {
                Box::new(analysis::FileProvider::load(Path::new(f))?)
            } else if let Some(u) = provider.strip_prefix("http:") {
                Box::new(analysis::HttpProvider::new(u, &model))
            } else {
                bail!("provider must be `file:<tsv>` or `http:<url>`");
            };
            let rep = analysis::cosine_similarity_distribution(&load_docs(&a)?, &load_docs(&b)?, p.as_ref())?;
            println!(
                "{} pairs, {} zero-norm skipped, {} provider failures",
                rep.similarities.len(),
                rep.skipped_zero_norm.len(),
                rep.failures.len()
            );
            report::write_similarity(&out, &rep)?
        }
        AnalyzeCmd::Kde {
            input,
            column,
            bandwidth,
            points,
            out,
            name,
        } => {
            let xs = read_values(&input, column.as_deref())?;
            let h = if bandwidth == "auto" {
                analysis::silverman_bandwidth(&xs)?
            } else {
                bandwidth.parse().with_context(|| format!("bad bandwidth `{bandwidth}`"))?
            };
            let grid = analysis::kde_grid(&xs, h, points);
            let (h, pts) = analysis::kde(&xs, Bandwidth::Fixed(h), &grid)?;
            let label = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            report::write_kde(
                &out,
                &name,
                &[report::KdeReport {
                    label,
                    bandwidth: h,
                    points: pts,
                }],
            )?
        }
        AnalyzeCmd::Lengths { corpus, out } => {
            let mut rows = Vec::new();
            for c in &corpus {
                let m = CorpusManifest::load(c)?;
                let counts: Vec<u64> = corpus::read_documents(&m)?.iter().map(|d| d.token_count).collect();
                let s = analysis::length_stats(&counts)?;
                println!("{}\tmin {}\tmax {}\tmean {:.2}\tmedian {}", m.corpus_name, s.min, s.max, s.mean, s.median);
                rows.push(report::LengthRow::new(&m.corpus_name, &m.tokenizer_id, &s));
            }
            report::write_lengths(&out, &rows)?
        }
    };
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}
