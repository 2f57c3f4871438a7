//! Word tokenization shared by the text model and the zero-shot text path.
//!
//! Lowercases, splits on unicode word boundaries, keeps punctuation as tokens,
//! keeps hashtags with their `#`, and replaces mentions and digit runs with
//! placeholder tokens.

use unicode_segmentation::UnicodeSegmentation;

pub const PAD: &str = "<pad>";
pub const UNKNOWN: &str = "<unk>";
pub const USER: &str = "<user>";
pub const NUMBER: &str = "<num>";

fn is_number(segment: &str) -> bool {
    segment.chars().any(|c| c.is_ascii_digit())
        && segment
            .chars()
            .all(|c| c.is_ascii_digit() || c == '.' || c == ',')
}

fn is_word(segment: &str) -> bool {
    segment.chars().any(|c| c.is_alphanumeric() || c == '_')
}

pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    let mut segments = lowered.split_word_bounds().peekable();
    while let Some(seg) = segments.next() {
        if seg.chars().all(char::is_whitespace) {
            continue;
        }
        if seg == "@" || seg == "#" {
            if let Some(next) = segments.peek().copied().filter(|n| is_word(n)) {
                segments.next();
                if seg == "@" {
                    out.push(USER.to_string());
                } else {
                    out.push(format!("#{next}"));
                }
                continue;
            }
        }
        if is_number(seg) {
            out.push(NUMBER.to_string());
        } else {
            out.push(seg.to_string());
        }
    }
    out
}
