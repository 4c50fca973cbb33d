//! Word tokenization over normalized text and fixed-width id encoding.

use super::{RawComment, TokenizedSample, Vocabulary, NUM_TOKEN, PAD, UNK};

/// Split normalized text into tokens: alphanumeric runs stay together, every
/// other non-space character stands alone, and the `<NUM>` marker survives as
/// a single token.
pub fn tokenize(normalized: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in normalized.split_whitespace() {
        let mut rest = chunk;
        let mut run = String::new();
        while !rest.is_empty() {
            if let Some(after) = rest.strip_prefix(NUM_TOKEN) {
                if !run.is_empty() {
                    tokens.push(std::mem::take(&mut run));
                }
                tokens.push(NUM_TOKEN.to_string());
                rest = after;
                continue;
            }
            let c = rest.chars().next().unwrap();
            if c.is_alphanumeric() {
                run.push(c);
            } else {
                if !run.is_empty() {
                    tokens.push(std::mem::take(&mut run));
                }
                tokens.push(c.to_string());
            }
            rest = &rest[c.len_utf8()..];
        }
        if !run.is_empty() {
            tokens.push(run);
        }
    }
    tokens
}

/// Encode one comment against word and character vocabularies, post-padding
/// both id sequences to fixed widths.
///
/// A comment whose normalized text produces zero tokens is encoded as a
/// single unknown token so every sample has at least one real position for
/// the encoder to attend to and pool over. Character sequences may still be
/// empty; the encoder handles that with a zero vector.
pub fn encode(
    comment: &RawComment,
    words: &Vocabulary,
    chars: &Vocabulary,
    t_max: usize,
    t_char: usize,
) -> TokenizedSample {
    let normalized = super::normalize(&comment.text);
    let toks = tokenize(&normalized);

    let mut word_ids = vec![PAD; t_max];
    let word_len = if toks.is_empty() {
        word_ids[0] = UNK;
        1
    } else {
        let n = toks.len().min(t_max);
        for (slot, tok) in word_ids.iter_mut().zip(&toks) {
            *slot = words.id_of(tok);
        }
        n
    };

    let mut char_ids = vec![PAD; t_char];
    let mut char_len = 0;
    let mut buf = [0u8; 4];
    for c in normalized.chars().take(t_char) {
        char_ids[char_len] = chars.id_of(c.encode_utf8(&mut buf));
        char_len += 1;
    }

    TokenizedSample {
        word_ids,
        char_ids,
        word_len,
        char_len,
        labels: comment.labels,
    }
}

/// Character tokens of normalized text (spaces included), for vocabulary
/// construction.
pub fn char_tokens(normalized: &str) -> Vec<String> {
    normalized.chars().map(|c| c.to_string()).collect()
}
