//! The artifact tokenizer.
//!
//! A token is either a maximal run of word characters (alphanumeric or `_`)
//! or a single character that is neither a word character nor whitespace.
//! Tokens never span whitespace, so for any `a` ending in whitespace (or `b`
//! starting with it) `count(a + b) == count(a) + count(b)`. The same holds
//! when `a` ends and `b` starts with punctuation.
//!
//! Counts are self-consistent across the crate but are not comparable in
//! absolute value to a model's native tokenizer.

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits `text` into tokens, borrowing from it.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            tokens.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            tokens.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = word_start {
        tokens.push(&text[s..]);
    }
    tokens
}

pub fn count_tokens(text: &str) -> u64 {
    tokenize(text).len() as u64
}

/// Lowercased word tokens with punctuation dropped; used by the overlap
/// metrics.
pub fn normalized_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().next().is_some_and(is_word_char))
        .map(str::to_lowercase)
        .collect()
}
