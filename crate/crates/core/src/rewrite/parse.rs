//! Extraction of the thinking trace and improved response from a tagged
//! completion.

use super::RewriteError;

pub const THINKING_START: &str = "<thinking_starts>";
pub const THINKING_END: &str = "<thinking_ends>";
pub const IMPROVED_START: &str = "<improved_response_starts>";
pub const IMPROVED_END: &str = "<improved_response_ends>";
pub const TAGS: [&str; 4] = [THINKING_START, THINKING_END, IMPROVED_START, IMPROVED_END];

/// Byte range of the content between the first `open` and the first `close`
/// after it, with surrounding whitespace excluded.
fn span(raw: &str, open: &str, close: &str) -> Option<(usize, usize)> {
    let start = raw.find(open)? + open.len();
    let end = start + raw[start..].find(close)?;
    let inner = &raw[start..end];
    let lead = inner.len() - inner.trim_start().len();
    let trimmed = inner.trim();
    Some((start + lead, start + lead + trimmed.len()))
}

/// Split a completion into `(thinking, improved)`. Thinking is empty when its
/// tags are absent; a missing or empty improved span is an error.
pub fn parse_tagged(raw: &str) -> Result<(&str, &str), RewriteError> {
    let (s, e) = span(raw, IMPROVED_START, IMPROVED_END).ok_or(RewriteError::MissingImprovedTags)?;
    if s == e {
        return Err(RewriteError::MissingImprovedTags);
    }
    let thinking = span(raw, THINKING_START, THINKING_END)
        .map(|(a, b)| &raw[a..b])
        .unwrap_or("");
    Ok((thinking, &raw[s..e]))
}

/// Inverse of [`parse_tagged`] for tag-free, trimmed inputs.
pub fn compose(thinking: &str, improved: &str) -> String {
    format!("{THINKING_START}{thinking}{THINKING_END}{IMPROVED_START}{improved}{IMPROVED_END}")
}

pub fn contains_tag(text: &str) -> bool {
    TAGS.iter().any(|t| text.contains(t))
}

/// Remove every tag marker from `text`.
pub fn scrub_tags(text: &str) -> String {
    let mut out = text.to_string();
    while contains_tag(&out) {
        for t in TAGS {
            out = out.replace(t, "");
        }
    }
    out.trim().to_string()
}
