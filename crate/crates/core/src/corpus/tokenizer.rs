//! Token counting. Every token quantity in the pipeline is relative to a
//! tokenizer id, which is recorded in each manifest.
//!
//! Two tokenizers are registered:
//! - `ws`: split on Unicode whitespace.
//! - `subword:<vocab-file>`: greedy longest-match segmentation of each
//!   whitespace word over a vocabulary file (one entry per line, first
//!   tab-separated column). A character with no vocabulary match is one
//!   unknown token.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::CorpusError;

pub const WHITESPACE_ID: &str = "ws";
const SUBWORD_PREFIX: &str = "subword:";

#[derive(Debug)]
pub struct SubwordVocab {
    path: PathBuf,
    entries: HashSet<String>,
    max_chars: usize,
}

impl SubwordVocab {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(Self::from_entries(
            path.to_path_buf(),
            raw.lines().filter_map(|l| {
                let tok = l.split('\t').next().unwrap_or("");
                (!tok.is_empty()).then(|| tok.to_string())
            }),
        ))
    }

    pub fn from_entries(path: PathBuf, entries: impl IntoIterator<Item = String>) -> Self {
        let entries: HashSet<String> = entries.into_iter().collect();
        let max_chars = entries.iter().map(|e| e.chars().count()).max().unwrap_or(0);
        SubwordVocab {
            path,
            entries,
            max_chars,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Byte lengths of the greedy segmentation of a single word.
    fn segment<'a>(&'a self, word: &'a str) -> impl Iterator<Item = usize> + 'a {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest.is_empty() {
                return None;
            }
            // char boundaries of the first max_chars characters, longest first
            let bounds: Vec<usize> = rest
                .char_indices()
                .skip(1)
                .map(|(i, _)| i)
                .chain(std::iter::once(rest.len()))
                .take(self.max_chars.max(1))
                .collect();
            let take = bounds
                .iter()
                .rev()
                .copied()
                .find(|&end| self.entries.contains(&rest[..end]))
                .unwrap_or(bounds[0]);
            rest = &rest[take..];
            Some(take)
        })
    }
}

#[derive(Debug, Clone)]
pub enum Tokenizer {
    Whitespace,
    Subword(Arc<SubwordVocab>),
}

impl Tokenizer {
    /// Resolve a tokenizer id (`ws` or `subword:<path>`).
    pub fn from_id(id: &str) -> Result<Self, CorpusError> {
        if id == WHITESPACE_ID {
            return Ok(Tokenizer::Whitespace);
        }
        if let Some(path) = id.strip_prefix(SUBWORD_PREFIX) {
            if path.is_empty() {
                return Err(CorpusError::UnknownTokenizer(id.to_string()));
            }
            let vocab = SubwordVocab::load(Path::new(path))?;
            return Ok(Tokenizer::Subword(Arc::new(vocab)));
        }
        Err(CorpusError::UnknownTokenizer(id.to_string()))
    }

    pub fn id(&self) -> String {
        match self {
            Tokenizer::Whitespace => WHITESPACE_ID.to_string(),
            Tokenizer::Subword(v) => format!("{SUBWORD_PREFIX}{}", v.path.display()),
        }
    }

    pub fn count(&self, text: &str) -> u64 {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().count() as u64,
            Tokenizer::Subword(v) => text
                .split_whitespace()
                .map(|w| v.segment(w).count() as u64)
                .sum(),
        }
    }

    /// Byte offset just past the end of each token, in order.
    pub fn token_ends<'a>(&'a self, text: &'a str) -> Box<dyn Iterator<Item = usize> + 'a> {
        let words = text.split_whitespace().map(move |w| {
            // split_whitespace yields subslices of text
            let start = w.as_ptr() as usize - text.as_ptr() as usize;
            (start, w)
        });
        match self {
            Tokenizer::Whitespace => Box::new(words.map(|(s, w)| s + w.len())),
            Tokenizer::Subword(v) => Box::new(words.flat_map(move |(s, w)| {
                v.segment(w).scan(s, |pos, len| {
                    *pos += len;
                    Some(*pos)
                })
            })),
        }
    }

    /// Keep the first `max_tokens` tokens of `text`. Returns the kept prefix
    /// and whether anything was cut.
    pub fn truncate<'a>(&self, text: &'a str, max_tokens: usize) -> (&'a str, bool) {
        if max_tokens == 0 {
            return ("", !text.trim().is_empty());
        }
        match self.token_ends(text).nth(max_tokens - 1) {
            Some(end) => {
                let truncated = !text[end..].trim().is_empty();
                (if truncated { &text[..end] } else { text }, truncated)
            }
            None => (text, false),
        }
    }
}

/// Count tokens of `text` under the tokenizer named by `tokenizer_id`.
pub fn count_tokens(text: &str, tokenizer_id: &str) -> Result<u64, CorpusError> {
    Ok(Tokenizer::from_id(tokenizer_id)?.count(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Tokenizer {
        Tokenizer::Subword(Arc::new(SubwordVocab::from_entries(
            PathBuf::from("mem"),
            words.iter().map(|s| s.to_string()),
        )))
    }

    /// Independent greedy longest-match: scan the whole vocabulary list for
    /// the longest entry that prefixes the remainder.
    fn reference_count(vocab: &[&str], text: &str) -> u64 {
        let mut n = 0;
        for word in text.split_whitespace() {
            let mut rest = word;
            while !rest.is_empty() {
                let best = vocab
                    .iter()
                    .filter(|v| rest.starts_with(**v))
                    .map(|v| v.len())
                    .max();
                let step = best.unwrap_or_else(|| rest.chars().next().unwrap().len_utf8());
                rest = &rest[step..];
                n += 1;
            }
        }
        n
    }

    #[test]
    fn empty_and_whitespace() {
        assert_eq!(count_tokens("", "ws").unwrap(), 0);
        assert_eq!(count_tokens("a b c", "ws").unwrap(), 3);
        assert_eq!(count_tokens("  a\u{3000}b\n\tc  ", "ws").unwrap(), 3);
    }

    #[test]
    fn unknown_tokenizer() {
        assert!(matches!(
            Tokenizer::from_id("bpe"),
            Err(CorpusError::UnknownTokenizer(_))
        ));
        assert!(matches!(
            Tokenizer::from_id("subword:"),
            Err(CorpusError::UnknownTokenizer(_))
        ));
    }

    #[test]
    fn subword_matches_reference_segmenter() {
        let words = [
            "the", "th", "t", "e", "ing", "in", "token", "tok", "en", "iz", "ation", "s", "un",
            "re", "cycl", "é", "café",
        ];
        let tok = vocab(&words);
        let paragraph = "The tokenization of recycling texts thething tokens unrecycled café \
                         caféé xyz tokentoken reiz ation-s";
        for text in [paragraph, "", "q", "tokenization", "ééé théé"] {
            assert_eq!(tok.count(text), reference_count(&words, text), "{text}");
        }
        assert_eq!(tok.count(paragraph), tok.token_ends(paragraph).count() as u64);
    }

    #[test]
    fn subword_vocab_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        fs::write(&p, "hel\t10\nlo\t5\nh\n\n").unwrap();
        let id = format!("subword:{}", p.display());
        assert_eq!(count_tokens("hello hello", &id).unwrap(), 4);
        assert_eq!(Tokenizer::from_id(&id).unwrap().id(), id);
    }

    #[test]
    fn truncate_keeps_prefix() {
        let t = Tokenizer::Whitespace;
        assert_eq!(t.truncate("a  b c d", 2), ("a  b", true));
        assert_eq!(t.truncate("a b ", 2), ("a b ", false));
        assert_eq!(t.truncate("a b", 5), ("a b", false));
        let s = vocab(&["ab", "c"]);
        assert_eq!(s.truncate("abc abc", 3), ("abc ab", true));
    }
}
