use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rayon::prelude::*;

use super::{CorpusError, CorpusManifest, Document, Provenance};

pub const MANIFEST_FILE: &str = "manifest.json";
const SHARD_PREFIX: &str = "shard-";

#[derive(Debug, Clone)]
pub struct WriteOptions {
    pub docs_per_shard: usize,
    pub compress: bool,
    pub provenance: Option<Provenance>,
    pub source_tokens: Option<BTreeMap<String, u64>>,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            docs_per_shard: 50_000,
            compress: true,
            provenance: None,
            source_tokens: None,
        }
    }
}

/// Open a possibly gzip-compressed file, sniffing the magic bytes.
pub(crate) fn open_lines(path: &Path) -> Result<Box<dyn BufRead + Send>, CorpusError> {
    let mut f = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = f.read(&mut magic).map_err(|e| CorpusError::io(path, e))?;
    let f = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

fn write_shard(path: &Path, docs: &[Document], compress: bool) -> Result<(), CorpusError> {
    let tmp = path.with_extension("partial");
    let file = File::create(&tmp).map_err(|e| CorpusError::io(&tmp, e))?;
    let mut sink: Box<dyn Write> = if compress {
        Box::new(GzEncoder::new(BufWriter::new(file), Compression::default()))
    } else {
        Box::new(BufWriter::new(file))
    };
    let result: std::io::Result<()> = (|| {
        for d in docs {
            serde_json::to_writer(&mut sink, d)?;
            sink.write_all(b"\n")?;
        }
        sink.flush()
    })();
    result.map_err(|e| CorpusError::io(&tmp, e))?;
    drop(sink);
    fs::rename(&tmp, path).map_err(|e| CorpusError::io(path, e))
}

/// Write `docs` as a sharded corpus under `dir` and save its manifest.
/// Existing shards in `dir` are replaced. Shards are written in parallel.
pub fn write_corpus(
    dir: &Path,
    corpus_name: &str,
    tokenizer_id: &str,
    docs: &[Document],
    opts: &WriteOptions,
) -> Result<CorpusManifest, CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    for entry in fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))? {
        let entry = entry.map_err(|e| CorpusError::io(dir, e))?;
        if entry.file_name().to_string_lossy().starts_with(SHARD_PREFIX) {
            fs::remove_file(entry.path()).map_err(|e| CorpusError::io(&entry.path(), e))?;
        }
    }
    let ext = if opts.compress { "jsonl.gz" } else { "jsonl" };
    let per = opts.docs_per_shard.max(1);
    let chunks: Vec<&[Document]> = if docs.is_empty() {
        vec![&[][..]]
    } else {
        docs.chunks(per).collect()
    };
    let names: Vec<PathBuf> = (0..chunks.len())
        .map(|i| PathBuf::from(format!("{SHARD_PREFIX}{i:05}.{ext}")))
        .collect();
    chunks
        .par_iter()
        .zip(names.par_iter())
        .try_for_each(|(chunk, name)| write_shard(&dir.join(name), chunk, opts.compress))?;

    let mut manifest = CorpusManifest {
        corpus_name: corpus_name.to_string(),
        shard_paths: names,
        document_count: docs.len() as u64,
        total_tokens: docs.iter().map(|d| d.token_count).sum(),
        tokenizer_id: tokenizer_id.to_string(),
        source_tokens: opts.source_tokens.clone(),
        provenance: opts.provenance.clone(),
        root: PathBuf::new(),
    };
    manifest.set_root(dir.to_path_buf());
    manifest.save()?;
    Ok(manifest)
}

fn read_shard(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let reader = open_lines(path)?;
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Read every document of a corpus in shard order.
pub fn read_documents(manifest: &CorpusManifest) -> Result<Vec<Document>, CorpusError> {
    let shards: Vec<Vec<Document>> = manifest
        .shard_files()
        .par_iter()
        .map(|p| read_shard(p))
        .collect::<Result<_, _>>()?;
    Ok(shards.into_iter().flatten().collect())
}

/// Copy the documents of `manifest` whose id is in `ids` into a new corpus
/// at `dir`, preserving shard order.
pub fn subset_corpus(
    manifest: &CorpusManifest,
    ids: &HashSet<String>,
    dir: &Path,
    corpus_name: &str,
    opts: &WriteOptions,
) -> Result<CorpusManifest, CorpusError> {
    let docs: Vec<Document> = read_documents(manifest)?
        .into_iter()
        .filter(|d| ids.contains(&d.id))
        .collect();
    write_corpus(dir, corpus_name, &manifest.tokenizer_id, &docs, opts)
}
