//! Rule-based, incremental sentence segmentation.
//!
//! A boundary is placed after a run of terminators (`.`, `!`, `?`, `…`),
//! optionally followed by closing quotes or brackets, when the run is
//! followed by whitespace and then a character that can start a sentence
//! (anything that is not a lowercase letter). A `.` is not a terminator when
//! it ends a known abbreviation, a single-letter initial, a dotted
//! abbreviation such as `U.S.`, or sits between two digits.
//!
//! A blank line (whitespace containing two or more newlines) is always a
//! boundary, terminated or not. Mid-sentence single newlines and list
//! bullets get no special treatment.
//!
//! Offsets are byte offsets into the source. The whitespace between two
//! sentences is kept as the first sentence's `trailing_separator`, so the
//! source can be rebuilt exactly from the segmentation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start_offset: usize,
    pub end_offset: usize,
    /// Whitespace between this sentence and the next one (or end of input).
    #[serde(default)]
    pub trailing_separator: String,
}

impl Sentence {
    /// A sentence that does not come from a segmented source, such as a
    /// refiner rewrite. Offsets are relative to `text` itself.
    pub fn detached(text: impl Into<String>) -> Self {
        let text = text.into();
        let end_offset = text.len();
        Self {
            text,
            start_offset: 0,
            end_offset,
            trailing_separator: String::new(),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

impl AsRef<str> for Sentence {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedAnswer {
    pub source: String,
    pub sentences: Vec<Sentence>,
}

impl SegmentedAnswer {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Whitespace before the first sentence (the whole source when it holds
    /// no sentence at all).
    pub fn leading_whitespace(&self) -> &str {
        match self.sentences.first() {
            Some(first) => &self.source[..first.start_offset],
            None => &self.source,
        }
    }

    /// Rebuilds the source from its parts.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.source.len());
        out.push_str(self.leading_whitespace());
        for s in &self.sentences {
            out.push_str(&s.text);
            out.push_str(&s.trailing_separator);
        }
        out
    }

    /// Sentences joined by single spaces.
    pub fn joined(&self) -> String {
        join_sentences(self.sentences.iter().map(|s| s.text.as_str()))
    }

    pub fn texts(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.text.as_str()).collect()
    }
}

pub fn join_sentences<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for part in parts {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(part);
    }
    out
}

/// Segments a complete text.
pub fn segment(source: &str) -> SegmentedAnswer {
    let spans = scan(source, true).spans;
    SegmentedAnswer {
        source: source.to_string(),
        sentences: spans.into_iter().map(|sp| sp.into_sentence(source, 0)).collect(),
    }
}

/// Incremental segmenter state. Feed chunks in source order, then
/// [`flush`](Segmenter::flush) at end of stream.
#[derive(Debug, Clone, Default)]
pub struct Segmenter {
    buffer: String,
    /// Absolute byte offset of `buffer[0]`.
    base: usize,
}

impl Segmenter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `chunk` and returns every sentence whose boundary is now
    /// confirmed by the next non-space character.
    pub fn feed(&mut self, chunk: &str) -> Vec<Sentence> {
        self.buffer.push_str(chunk);
        let scanned = scan(&self.buffer, false);
        let emitted: Vec<Sentence> = scanned
            .spans
            .into_iter()
            .map(|sp| sp.into_sentence(&self.buffer, self.base))
            .collect();
        if scanned.consumed > 0 {
            self.buffer.drain(..scanned.consumed);
            self.base += scanned.consumed;
        }
        emitted
    }

    /// Emits the buffered tail, if it holds any non-whitespace text, and
    /// resets the state.
    pub fn flush(&mut self) -> Vec<Sentence> {
        let spans = scan(&self.buffer, true).spans;
        let out = spans
            .into_iter()
            .map(|sp| sp.into_sentence(&self.buffer, self.base))
            .collect();
        self.base += self.buffer.len();
        self.buffer.clear();
        out
    }

    /// Bytes fed so far that have not been emitted.
    pub fn pending(&self) -> &str {
        &self.buffer
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
    separator_end: usize,
}

impl Span {
    fn into_sentence(self, buf: &str, base: usize) -> Sentence {
        Sentence {
            text: buf[self.start..self.end].to_string(),
            start_offset: base + self.start,
            end_offset: base + self.end,
            trailing_separator: buf[self.end..self.separator_end].to_string(),
        }
    }
}

struct Scan {
    spans: Vec<Span>,
    /// Bytes of input fully accounted for by `spans` (including separators).
    consumed: usize,
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "mt", "ft", "gen", "col", "lt", "sgt",
    "capt", "cmdr", "adm", "rev", "gov", "sen", "rep", "pres", "hon", "inc", "ltd", "corp",
    "bros", "dept", "univ", "assn", "approx", "ca", "cf", "al", "jan", "feb", "apr", "jun", "jul",
    "aug", "sept", "oct", "nov", "dec", "ave", "blvd",
];

/// Abbreviations that are also ordinary words; guarded only before a number.
const NUMERIC_ABBREVIATIONS: &[&str] = &[
    "no", "nos", "vol", "vols", "fig", "figs", "pp", "ch", "sec", "art", "mar", "sep", "est",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…' | '‼' | '⁇' | '⁈' | '⁉')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '”' | '’' | '»')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '{' | '“' | '‘' | '«')
}

fn plausible_start(c: char) -> bool {
    !c.is_lowercase()
}

/// The word ending right before byte `dot` (exclusive), stripped of opening
/// punctuation.
fn word_before(buf: &str, dot: usize) -> &str {
    let head = &buf[..dot];
    let start = head
        .char_indices()
        .rev()
        .find(|&(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    head[start..].trim_start_matches(is_opener)
}

/// `U.S`, `e.g`, `a.m`: single letters joined by dots.
fn is_dotted_abbreviation(word: &str) -> bool {
    let parts: Vec<&str> = word.split('.').collect();
    parts.len() >= 2
        && parts
            .iter()
            .all(|p| p.chars().count() == 1 && p.chars().all(char::is_alphabetic))
}

fn guarded_period(buf: &str, dot: usize, next: char) -> bool {
    let word = word_before(buf, dot);
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    // Clock times usually end a sentence when a capital follows.
    if lower == "a.m" || lower == "p.m" {
        return false;
    }
    if ABBREVIATIONS.contains(&lower.as_str())
        || (next.is_ascii_digit() && NUMERIC_ABBREVIATIONS.contains(&lower.as_str()))
    {
        return true;
    }
    let mut chars = word.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if c.is_uppercase() {
            return true;
        }
    }
    is_dotted_abbreviation(word)
}

fn is_decimal_point(chars: &[(usize, char)], i: usize) -> bool {
    chars[i].1 == '.'
        && i > 0
        && chars[i - 1].1.is_ascii_digit()
        && chars.get(i + 1).is_some_and(|&(_, c)| c.is_ascii_digit())
}

/// Finds sentence spans in `buf`. With `eof == false` only spans whose
/// boundary has been confirmed by a following non-space character are
/// returned; the remainder is left for a later call.
fn scan(buf: &str, eof: bool) -> Scan {
    let chars: Vec<(usize, char)> = buf.char_indices().collect();
    let len = chars.len();
    let byte_at = |i: usize| if i < len { chars[i].0 } else { buf.len() };
    let skip_ws = |mut i: usize| {
        while i < len && chars[i].1.is_whitespace() {
            i += 1;
        }
        i
    };
    let newlines = |from: usize, to: usize| chars[from..to].iter().filter(|&&(_, c)| c == '\n').count();

    let mut spans = Vec::new();
    let mut consumed = 0usize;
    let mut start = skip_ws(0);
    let mut j = start;

    while j < len {
        let c = chars[j].1;
        if c.is_whitespace() {
            let k = skip_ws(j);
            if k == len {
                break;
            }
            if newlines(j, k) >= 2 {
                spans.push(Span { start: byte_at(start), end: byte_at(j), separator_end: byte_at(k) });
                consumed = byte_at(k);
                start = k;
            }
            j = k;
            continue;
        }
        if !is_terminator(c) || is_decimal_point(&chars, j) {
            j += 1;
            continue;
        }
        let mut m = j;
        while m < len && is_terminator(chars[m].1) {
            m += 1;
        }
        let run_is_single_period = m == j + 1 && c == '.';
        while m < len && is_closer(chars[m].1) {
            m += 1;
        }
        if m == len {
            break;
        }
        if !chars[m].1.is_whitespace() {
            j = m;
            continue;
        }
        let k = skip_ws(m);
        if k == len {
            break;
        }
        let hard = newlines(m, k) >= 2;
        let guarded = run_is_single_period && guarded_period(buf, byte_at(j), chars[k].1);
        if hard || (!guarded && plausible_start(chars[k].1)) {
            spans.push(Span { start: byte_at(start), end: byte_at(m), separator_end: byte_at(k) });
            consumed = byte_at(k);
            start = k;
        }
        j = k;
    }

    if eof && start < len {
        let tail = &buf[byte_at(start)..];
        let trimmed = tail.trim_end();
        if !trimmed.is_empty() {
            let s = byte_at(start);
            spans.push(Span { start: s, end: s + trimmed.len(), separator_end: buf.len() });
            consumed = buf.len();
        }
    }
    Scan { spans, consumed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        segment(src).sentences.into_iter().map(|s| s.text).collect()
    }

    fn streamed(chunks: &[&str]) -> Vec<Sentence> {
        let mut seg = Segmenter::new();
        let mut out = Vec::new();
        for c in chunks {
            out.extend(seg.feed(c));
        }
        out.extend(seg.flush());
        out
    }

    #[test]
    fn two_terminated_sentences() {
        assert_eq!(texts("Hello. World."), ["Hello.", "World."]);
    }

    #[test]
    fn empty_and_blank_input() {
        assert!(segment("").is_empty());
        let ws = segment("  \n\t ");
        assert!(ws.is_empty());
        assert_eq!(ws.reconstruct(), "  \n\t ");
    }

    #[test]
    fn abbreviation_and_decimal_guards() {
        assert_eq!(
            texts("Dr. Smith slept. He woke at 3.5 a.m. sharp."),
            ["Dr. Smith slept.", "He woke at 3.5 a.m. sharp."]
        );
        assert_eq!(texts("The U.S. Army left. It rained."), ["The U.S. Army left.", "It rained."]);
        assert_eq!(texts("J. R. R. Tolkien wrote it."), ["J. R. R. Tolkien wrote it."]);
        assert_eq!(texts("Pi is 3.14159 roughly. Yes."), ["Pi is 3.14159 roughly.", "Yes."]);
        assert_eq!(texts("The answer is no. Then it rained."), ["The answer is no.", "Then it rained."]);
        assert_eq!(texts("We landed at 11 p.m. The airport was empty."), ["We landed at 11 p.m.", "The airport was empty."]);
    }

    #[test]
    fn lowercase_continuation_is_not_a_boundary() {
        assert_eq!(texts("Wait... what happened? Nothing."), ["Wait... what happened?", "Nothing."]);
    }

    #[test]
    fn closing_quotes_stay_with_sentence() {
        assert_eq!(
            texts("He said \"Stop.\" Then he left! (Really.) Ok?"),
            ["He said \"Stop.\"", "Then he left!", "(Really.)", "Ok?"]
        );
    }

    #[test]
    fn blank_line_is_hard_boundary() {
        let seg = segment("Title\n\nBody text here. more text\nstill same.");
        assert_eq!(seg.texts(), ["Title", "Body text here. more text\nstill same."]);
        assert_eq!(seg.sentences[0].trailing_separator, "\n\n");
    }

    #[test]
    fn offsets_and_separators() {
        let src = "  One.  Two!\nThree?  ";
        let seg = segment(src);
        assert_eq!(seg.texts(), ["One.", "Two!", "Three?"]);
        for s in &seg.sentences {
            assert_eq!(&src[s.start_offset..s.end_offset], s.text);
        }
        assert_eq!(seg.sentences[0].trailing_separator, "  ");
        assert_eq!(seg.sentences[2].trailing_separator, "  ");
        assert_eq!(seg.leading_whitespace(), "  ");
        assert_eq!(seg.reconstruct(), src);
    }

    #[test]
    fn multibyte_text() {
        let src = "Ça va? Très bien… Merci. 東京は大きい. Ok.";
        let seg = segment(src);
        assert_eq!(seg.reconstruct(), src);
        assert_eq!(seg.texts(), ["Ça va?", "Très bien…", "Merci.", "東京は大きい.", "Ok."]);
    }

    #[test]
    fn feed_across_chunk_boundary() {
        let out: Vec<String> = streamed(&["Hello. Wor", "ld."]).into_iter().map(|s| s.text).collect();
        assert_eq!(out, ["Hello.", "World."]);
    }

    #[test]
    fn feed_waits_for_lookahead() {
        let mut seg = Segmenter::new();
        assert!(seg.feed("Hello.").is_empty());
        assert!(seg.feed(" ").is_empty());
        let out = seg.feed("W");
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "Hello.");
        assert_eq!(out[0].trailing_separator, " ");
        assert_eq!(seg.pending(), "W");
    }

    #[test]
    fn flush_emits_unterminated_tail() {
        let out = streamed(&["Hello"]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "Hello");
        let mut seg = Segmenter::new();
        seg.feed("pending text");
        assert_eq!(seg.flush()[0].text, "pending text");
        assert!(seg.flush().is_empty());
        assert!(Segmenter::new().flush().is_empty());
    }

    #[test]
    fn streamed_offsets_are_absolute() {
        let src = "A b. C d. E f.";
        let out = streamed(&["A b", ". C", " d. E", " f."]);
        assert_eq!(out, segment(src).sentences);
    }

    #[test]
    fn idempotent_on_single_sentence() {
        for s in ["Hello there.", "Dr. No is a film.", "See No. 5 here.", "No terminator"] {
            assert_eq!(texts(s), [s]);
        }
    }
}
