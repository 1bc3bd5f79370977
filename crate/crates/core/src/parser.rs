//! Turns raw completion text into a structured parse.
//!
//! The runner composes [`extract_think`] and [`parse_number`] through
//! [`parse_output`]. Both are total: malformed input surfaces as a status,
//! never as an error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";

/// Outcome of one call, shared by parsed outputs and stored records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStatus {
    Ok,
    OutOfRange,
    Unparsable,
    ExtraText,
    Decoherent,
    ProviderError,
}

impl CallStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CallStatus::Ok => "ok",
            CallStatus::OutOfRange => "out_of_range",
            CallStatus::Unparsable => "unparsable",
            CallStatus::ExtraText => "extra_text",
            CallStatus::Decoherent => "decoherent",
            CallStatus::ProviderError => "provider_error",
        }
    }

    /// Statuses whose value lies inside the prompted range and enters the statistics.
    pub fn is_in_range(self) -> bool {
        matches!(self, CallStatus::Ok | CallStatus::ExtraText | CallStatus::Decoherent)
    }
}

impl fmt::Display for CallStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown call status `{0}`")]
pub struct UnknownStatus(pub String);

impl FromStr for CallStatus {
    type Err = UnknownStatus;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ok" => CallStatus::Ok,
            "out_of_range" => CallStatus::OutOfRange,
            "unparsable" => CallStatus::Unparsable,
            "extra_text" => CallStatus::ExtraText,
            "decoherent" => CallStatus::Decoherent,
            "provider_error" => CallStatus::ProviderError,
            other => return Err(UnknownStatus(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub value: Option<i64>,
    pub in_range: bool,
    pub extra_text: bool,
    pub decoherent: bool,
    pub think_text: Option<String>,
    pub status: CallStatus,
}

/// Think block interior and the text left once the block is removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThinkSplit {
    pub think: Option<String>,
    pub remainder: String,
}

/// Separate `<think>…</think>` reasoning from the answer text.
///
/// Several blocks are joined with a newline. An unterminated block runs to
/// the end of the text. A closing tag with no opening tag before it (chat
/// templates that pre-open the block) makes everything before it reasoning.
pub fn extract_think(text: &str) -> ThinkSplit {
    let mut think: Option<String> = None;
    let mut remainder = String::with_capacity(text.len());
    let mut rest = text;

    let mut push_think = |part: &str| match think.as_mut() {
        Some(t) => {
            t.push('\n');
            t.push_str(part);
        }
        None => think = Some(part.to_string()),
    };

    if let Some(close) = rest.find(THINK_CLOSE) {
        if !rest[..close].contains(THINK_OPEN) {
            push_think(&rest[..close]);
            rest = &rest[close + THINK_CLOSE.len()..];
        }
    }

    loop {
        match rest.find(THINK_OPEN) {
            None => {
                remainder.push_str(rest);
                break;
            }
            Some(open) => {
                remainder.push_str(&rest[..open]);
                let inner = &rest[open + THINK_OPEN.len()..];
                match inner.find(THINK_CLOSE) {
                    Some(close) => {
                        push_think(&inner[..close]);
                        rest = &inner[close + THINK_CLOSE.len()..];
                    }
                    None => {
                        push_think(inner);
                        break;
                    }
                }
            }
        }
    }

    ThinkSplit { think, remainder }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Integer(Option<i64>),
    NonInteger,
}

/// A standalone numeric token; byte offsets into the scanned text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct NumToken {
    start: usize,
    end: usize,
    kind: TokenKind,
}

fn digit_value(c: char) -> Option<u32> {
    match c {
        '0'..='9' => Some(c as u32 - '0' as u32),
        '\u{FF10}'..='\u{FF19}' => Some(c as u32 - 0xFF10),
        _ => None,
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x31F0..=0x31FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FFFF)
}

/// Characters that glue a digit run into a longer word. CJK text has no
/// word spacing, so ideographs and kana never glue.
fn is_word_char(c: char) -> bool {
    c == '_' || (c.is_alphanumeric() && !is_cjk(c) && digit_value(c).is_none())
}

fn is_minus(c: char) -> bool {
    matches!(c, '-' | '\u{2212}')
}

fn scan_numbers(text: &str) -> Vec<NumToken> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let at = |i: usize| chars.get(i).map(|&(_, c)| c);
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);

    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if digit_value(chars[i].1).is_none() {
            i += 1;
            continue;
        }
        let run_start = i;
        while at(i).and_then(digit_value).is_some() {
            i += 1;
        }
        let mut run_end = i;
        let mut kind = TokenKind::Integer(None);

        // Fractional part: "3.5" is one non-integer token.
        if at(run_end) == Some('.') && at(run_end + 1).and_then(digit_value).is_some() {
            let mut j = run_end + 1;
            while at(j).and_then(digit_value).is_some() {
                j += 1;
            }
            run_end = j;
            i = j;
            kind = TokenKind::NonInteger;
        }

        let before = run_start.checked_sub(1).and_then(at);
        let after = at(run_end);
        if before.is_some_and(is_word_char) || after.is_some_and(is_word_char) {
            continue;
        }
        if before == Some('.') {
            kind = TokenKind::NonInteger;
        }
        if before.is_some_and(is_minus) {
            // "-3" is negative; "1-5" is a range separator.
            let glued = run_start
                .checked_sub(2)
                .and_then(at)
                .is_some_and(|c| digit_value(c).is_some() || is_word_char(c));
            if !glued {
                kind = TokenKind::NonInteger;
            }
        }
        if kind == TokenKind::Integer(None) {
            let mut value: Option<i64> = Some(0);
            for &(_, c) in &chars[run_start..run_end] {
                let d = digit_value(c).expect("digit run") as i64;
                value = value.and_then(|v| v.checked_mul(10)).and_then(|v| v.checked_add(d));
            }
            kind = TokenKind::Integer(value);
        }
        tokens.push(NumToken {
            start: byte_at(run_start),
            end: byte_at(run_end),
            kind,
        });
    }
    tokens
}

/// All standalone integers in order of appearance (decimals and negatives skipped).
pub fn standalone_integers(text: &str) -> Vec<i64> {
    scan_numbers(text)
        .into_iter()
        .filter_map(|t| match t.kind {
            TokenKind::Integer(v) => v,
            TokenKind::NonInteger => None,
        })
        .collect()
}

const NOTE_PREFIXES: &[&str] = &[
    "note",
    "nota",
    "remarque",
    "примечание",
    "заметка",
    "注",
    "备注",
    "टिप्पणी",
    "नोट",
    "ps",
];

fn is_note(extra: &str) -> bool {
    let trimmed = extra.trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '_');
    if trimmed.starts_with('(') || trimmed.starts_with('[') || trimmed.starts_with('（') {
        return true;
    }
    let lower = trimmed.to_lowercase();
    NOTE_PREFIXES.iter().any(|p| {
        lower.starts_with(p)
            && lower[p.len()..]
                .chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric() || is_cjk(c))
    })
}

#[derive(PartialEq)]
enum WordClass {
    Natural { long: bool },
    Junk,
    Neutral,
}

fn classify_word(word: &str) -> WordClass {
    let core = word.trim_matches(|c: char| !c.is_alphanumeric());
    if core.is_empty() || core.chars().all(|c| digit_value(c).is_some()) {
        return WordClass::Neutral;
    }
    let mut letters = 0usize;
    let mut cjk = 0usize;
    for c in core.chars() {
        if is_cjk(c) {
            cjk += 1;
        } else if c.is_alphabetic() || is_combining_mark(c) {
            letters += 1;
        } else if matches!(c, '\'' | '’' | '-') {
        } else {
            return WordClass::Junk;
        }
    }
    if letters > 0 && cjk > 0 {
        return WordClass::Junk;
    }
    WordClass::Natural {
        long: letters >= 3 || cjk >= 2,
    }
}

// Combining accents and Devanagari vowel signs, which `is_alphabetic` misses.
fn is_combining_mark(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x0900..=0x0903 | 0x093A..=0x094F | 0x0951..=0x0957 | 0x0962..=0x0963)
}

/// Gibberish heuristic over the text surrounding the answer.
///
/// Notes and parentheticals are coherent. Otherwise the text is decoherent
/// when it has no natural word of three or more letters, or when junk words
/// (symbol soup, letters fused with digits) outnumber the rest.
fn looks_decoherent(extra: &str) -> bool {
    if extra.trim().is_empty() || is_note(extra) {
        return false;
    }
    let mut natural_long = 0usize;
    let mut junk = 0usize;
    let mut counted = 0usize;
    for word in extra.split_whitespace() {
        match classify_word(word) {
            WordClass::Natural { long } => {
                counted += 1;
                if long {
                    natural_long += 1;
                }
            }
            WordClass::Junk => {
                counted += 1;
                junk += 1;
            }
            WordClass::Neutral => {}
        }
    }
    if counted == 0 {
        return false;
    }
    natural_long == 0 || junk * 2 > counted
}

/// Parse answer text (think block already removed) against the range 1..=`upper`.
pub fn parse_number(text: &str, upper: u64) -> ParsedOutput {
    let first = scan_numbers(text).into_iter().next();
    let (value, extra) = match first {
        Some(NumToken {
            start,
            end,
            kind: TokenKind::Integer(Some(v)),
        }) => (Some(v), format!("{} {}", &text[..start], &text[end..])),
        _ => (None, text.to_string()),
    };

    let extra_text = extra.chars().any(|c| !c.is_whitespace());
    let decoherent = extra_text && looks_decoherent(&extra);
    let in_range = value.is_some_and(|v| v >= 1 && (v as u64) <= upper);

    let status = match value {
        None => CallStatus::Unparsable,
        Some(_) if !in_range => CallStatus::OutOfRange,
        Some(_) if decoherent => CallStatus::Decoherent,
        Some(_) if extra_text => CallStatus::ExtraText,
        Some(_) => CallStatus::Ok,
    };

    ParsedOutput {
        value,
        in_range,
        extra_text,
        decoherent,
        think_text: None,
        status,
    }
}

/// Full parse of a raw completion: think extraction, then number parsing.
pub fn parse_output(raw: &str, upper: u64) -> ParsedOutput {
    let split = extract_think(raw);
    let mut parsed = parse_number(&split.remainder, upper);
    parsed.think_text = split.think;
    parsed
}
