//! Mapping verifier output text to a boolean verdict.
//!
//! The first run of ASCII letters in the text decides, case-insensitively:
//! `true`/`yes` map to true and `false`/`no` map to false. Anything else is a
//! parse failure.

pub fn parse_verdict(text: &str) -> Option<bool> {
    let start = text.find(|c: char| c.is_ascii_alphabetic())?;
    let rest = &text[start..];
    let end = rest.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(rest.len());
    match rest[..end].to_ascii_lowercase().as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}
