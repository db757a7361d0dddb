//! The guided-rewrite prompt. The template is stored as a versioned resource
//! and used byte-for-byte; only the placeholder is substituted.

use crate::corpus::{Document, Tokenizer};

use super::RewriteError;

pub const PROMPT_TEMPLATE: &str = include_str!("prompt_v1.txt");
pub const PROMPT_VERSION: &str = "v1";
pub const PLACEHOLDER: &str = "[ORIGINAL DOCUMENT]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltPrompt {
    pub text: String,
    /// Tokens of the document that made it into the prompt.
    pub input_tokens: u64,
    pub truncated: bool,
}

/// Substitute the document (cut to its first `max_input_tokens` tokens) into
/// the template.
pub fn build_prompt(
    doc: &Document,
    tokenizer: &Tokenizer,
    max_input_tokens: usize,
) -> Result<BuiltPrompt, RewriteError> {
    let (body, truncated) = tokenizer.truncate(&doc.text, max_input_tokens);
    if body.trim().is_empty() {
        return Err(RewriteError::EmptyDocument(doc.id.clone()));
    }
    Ok(BuiltPrompt {
        text: PROMPT_TEMPLATE.replacen(PLACEHOLDER, body, 1),
        input_tokens: tokenizer.count(body),
        truncated,
    })
}

/// Recover the document text from a prompt built by [`build_prompt`].
pub fn extract_document(prompt: &str) -> Option<&str> {
    let prefix = PROMPT_TEMPLATE.strip_suffix(PLACEHOLDER)?;
    prompt.strip_prefix(prefix)
}
