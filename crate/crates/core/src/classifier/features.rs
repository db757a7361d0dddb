use xxhash_rust::xxh3::xxh3_64_with_seed;

const UNIGRAM_SEED: u64 = 0x756e69;
const BIGRAM_SEED: u64 = 0x626967;

/// Hash buckets of the lowercased whitespace unigrams and adjacent bigrams of
/// `text`, in text order (unigrams first).
pub fn feature_buckets(text: &str, bucket_count: usize) -> Vec<u32> {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    let b = bucket_count as u64;
    let mut out = Vec::with_capacity(tokens.len() * 2);
    out.extend(
        tokens
            .iter()
            .map(|t| (xxh3_64_with_seed(t.as_bytes(), UNIGRAM_SEED) % b) as u32),
    );
    let mut pair = String::new();
    for w in tokens.windows(2) {
        pair.clear();
        pair.push_str(w[0]);
        pair.push(' ');
        pair.push_str(w[1]);
        out.push((xxh3_64_with_seed(pair.as_bytes(), BIGRAM_SEED) % b) as u32);
    }
    out
}
