//! Emoji catalog and extraction of emoji from free text.
//!
//! The catalog is the class universe: every entry gets a dense class index in
//! file order. [`segment`] splits a text into the stripped text and the list of
//! catalog emoji it contained, such that every input codepoint ends up in
//! exactly one of the two streams.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use crate::{Error, Result};

pub type ClassIndex = usize;

const ZWJ: char = '\u{200D}';
const VS15: char = '\u{FE0E}';
const VS16: char = '\u{FE0F}';

pub fn is_skin_tone_modifier(c: char) -> bool {
    ('\u{1F3FB}'..='\u{1F3FF}').contains(&c)
}

pub fn is_variation_selector(c: char) -> bool {
    c == VS15 || c == VS16
}

pub fn is_regional_indicator(c: char) -> bool {
    ('\u{1F1E6}'..='\u{1F1FF}').contains(&c)
}

/// A non-empty sequence of unicode scalar values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmojiSequence(Vec<char>);

impl EmojiSequence {
    pub fn new(chars: Vec<char>) -> Result<Self> {
        if chars.is_empty() {
            return Err(Error::invalid("emoji sequence must not be empty"));
        }
        Ok(EmojiSequence(chars))
    }

    pub fn from_str_chars(s: &str) -> Result<Self> {
        Self::new(s.chars().collect())
    }

    /// Parses `1F468-200D-1F469` style notation.
    pub fn from_hex(spec: &str) -> Result<Self> {
        let mut chars = Vec::new();
        for part in spec.trim().split('-') {
            let part = part.trim();
            if part.is_empty() || part.len() > 6 {
                return Err(Error::invalid(format!("bad codepoint {part:?} in {spec:?}")));
            }
            let value = u32::from_str_radix(part, 16)
                .map_err(|_| Error::invalid(format!("bad codepoint {part:?} in {spec:?}")))?;
            let c = char::from_u32(value)
                .ok_or_else(|| Error::invalid(format!("U+{value:X} is not a scalar value")))?;
            chars.push(c);
        }
        Self::new(chars)
    }

    pub fn to_hex(&self) -> String {
        self.0
            .iter()
            .map(|c| format!("{:X}", *c as u32))
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn chars(&self) -> &[char] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for EmojiSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmojiEntry {
    pub sequence: EmojiSequence,
    pub name: String,
    pub description_terms: Vec<String>,
    pub class_index: ClassIndex,
}

/// The emoji class universe. Read-only once built.
#[derive(Clone, Debug)]
pub struct EmojiCatalog {
    entries: Vec<EmojiEntry>,
    lookup: HashMap<Vec<char>, ClassIndex>,
    /// Keys with variation selectors and a trailing joiner removed, for entries
    /// that carry no skin-tone modifier.
    base_lookup: HashMap<Vec<char>, ClassIndex>,
    starters: HashSet<char>,
    max_len: usize,
}

/// Removes presentation selectors, skin tones and one trailing joiner.
fn fallback_key(chars: &[char]) -> Vec<char> {
    let mut key: Vec<char> = chars
        .iter()
        .copied()
        .filter(|&c| !is_variation_selector(c) && !is_skin_tone_modifier(c))
        .collect();
    if key.last() == Some(&ZWJ) {
        key.pop();
    }
    key
}

impl EmojiCatalog {
    /// Builds a catalog assigning class indices in the given order.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (EmojiSequence, String, Vec<String>)>,
    {
        let mut out = Vec::new();
        let mut lookup = HashMap::new();
        for (sequence, name, terms) in entries {
            let class_index = out.len();
            if lookup.insert(sequence.0.clone(), class_index).is_some() {
                return Err(Error::DuplicateSequence(sequence.to_hex()));
            }
            let mut description_terms = normalize_terms(terms.iter().map(String::as_str));
            if description_terms.is_empty() {
                description_terms = normalize_terms(name.split(|c: char| c.is_whitespace() || c == '_'));
            }
            if description_terms.is_empty() {
                return Err(Error::invalid(format!(
                    "entry {} has neither name nor description terms",
                    sequence.to_hex()
                )));
            }
            out.push(EmojiEntry {
                sequence,
                name,
                description_terms,
                class_index,
            });
        }
        if out.is_empty() {
            return Err(Error::Empty("emoji catalog"));
        }

        let mut base_lookup: HashMap<Vec<char>, ClassIndex> = HashMap::new();
        for entry in &out {
            let seq = entry.sequence.chars();
            if seq.iter().any(|&c| is_skin_tone_modifier(c)) {
                continue;
            }
            let key = fallback_key(seq);
            if key.is_empty() {
                continue;
            }
            let exact = key.as_slice() == seq;
            match base_lookup.get(&key) {
                None => {
                    base_lookup.insert(key, entry.class_index);
                }
                Some(&prev) if exact && out[prev].sequence.chars() != key.as_slice() => {
                    base_lookup.insert(key, entry.class_index);
                }
                Some(_) => {}
            }
        }

        let starters = lookup
            .keys()
            .chain(base_lookup.keys())
            .filter_map(|k| k.first().copied())
            .collect();
        let max_len = out.iter().map(|e| e.sequence.len()).max().unwrap_or(1);
        Ok(EmojiCatalog {
            entries: out,
            lookup,
            base_lookup,
            starters,
            max_len,
        })
    }

    /// Parses the tab-separated catalog format:
    /// `<hex codepoints joined by '-'>\t<name>\t<space-separated description terms>`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen: HashMap<Vec<char>, usize> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let hex = cols.next().unwrap_or_default();
            let sequence = EmojiSequence::from_hex(hex)
                .map_err(|e| Error::parse("catalog", lineno + 1, e.to_string()))?;
            let name = cols
                .next()
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| Error::parse("catalog", lineno + 1, "missing name column"))?
                .to_string();
            let terms: Vec<String> = cols
                .next()
                .unwrap_or_default()
                .split_whitespace()
                .map(str::to_string)
                .collect();
            if cols.next().is_some() {
                return Err(Error::parse("catalog", lineno + 1, "too many columns"));
            }
            if seen.insert(sequence.0.clone(), lineno + 1).is_some() {
                return Err(Error::DuplicateSequence(sequence.to_hex()));
            }
            rows.push((sequence, name, terms));
        }
        Self::from_entries(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Serializes back to the catalog file format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.sequence.to_hex(),
                e.name,
                e.description_terms.join(" ")
            ));
        }
        out
    }

    /// Number of classes.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[EmojiEntry] {
        &self.entries
    }

    pub fn entry(&self, class: ClassIndex) -> Option<&EmojiEntry> {
        self.entries.get(class)
    }

    /// Exact lookup of a codepoint sequence.
    pub fn class_of(&self, sequence: &[char]) -> Option<ClassIndex> {
        self.lookup.get(sequence).copied()
    }

    /// Exact lookup, falling back to the base emoji with skin tones and
    /// presentation selectors removed.
    pub fn class_of_with_fallback(&self, sequence: &[char]) -> Option<ClassIndex> {
        self.class_of(sequence).or_else(|| self.fallback_class(sequence))
    }

    fn fallback_class(&self, sequence: &[char]) -> Option<ClassIndex> {
        let first = *sequence.first()?;
        if is_skin_tone_modifier(first) || is_variation_selector(first) || first == ZWJ {
            return None;
        }
        let key = fallback_key(sequence);
        // a lone base codepoint in text presentation is not an emoji
        if key.as_slice() == sequence && sequence.len() == 1 {
            return None;
        }
        self.base_lookup.get(&key).copied()
    }
}

fn normalize_terms<'a>(terms: impl Iterator<Item = &'a str>) -> Vec<String> {
    terms
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentOptions {
    /// Extract each regional-indicator letter on its own instead of as flag pairs.
    pub letterwise_flags: bool,
    /// Map modified sequences that are missing from the catalog to their base emoji.
    pub modifier_fallback: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            letterwise_flags: false,
            modifier_fallback: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractedEmoji {
    pub class_index: ClassIndex,
    /// The input codepoints consumed by this emoji.
    pub source: String,
    /// Char offsets of `source` in the input text.
    pub positions: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub stripped_text: String,
    pub emoji: Vec<ExtractedEmoji>,
}

impl Segmentation {
    /// Class indices in order of appearance, with multiplicity.
    pub fn class_indices(&self) -> Vec<ClassIndex> {
        self.emoji.iter().map(|e| e.class_index).collect()
    }

    /// Sorted, deduplicated class set.
    pub fn class_set(&self) -> Vec<ClassIndex> {
        let mut set = self.class_indices();
        set.sort_unstable();
        set.dedup();
        set
    }

    pub fn entries<'a>(&self, catalog: &'a EmojiCatalog) -> Vec<&'a EmojiEntry> {
        self.emoji
            .iter()
            .filter_map(|e| catalog.entry(e.class_index))
            .collect()
    }
}

/// Splits `text` into stripped text and extracted catalog emoji.
///
/// Matching is longest-first over catalog sequences. Removing an emoji can
/// bring two codepoints together that form a new catalog sequence, so the scan
/// repeats on the stripped stream until nothing more is extracted.
pub fn segment(text: &str, catalog: &EmojiCatalog, options: SegmentOptions) -> Segmentation {
    let mut stream: Vec<(usize, char)> = text.chars().enumerate().collect();
    let mut found = Vec::new();
    loop {
        let (kept, extracted) = scan(&stream, catalog, options);
        if extracted.is_empty() {
            break;
        }
        found.extend(extracted);
        stream = kept;
    }
    found.sort_by_key(|e: &ExtractedEmoji| e.positions[0]);
    Segmentation {
        stripped_text: stream.iter().map(|&(_, c)| c).collect(),
        emoji: found,
    }
}

fn scan(
    stream: &[(usize, char)],
    catalog: &EmojiCatalog,
    options: SegmentOptions,
) -> (Vec<(usize, char)>, Vec<ExtractedEmoji>) {
    let chars: Vec<char> = stream.iter().map(|&(_, c)| c).collect();
    let mut kept = Vec::with_capacity(stream.len());
    let mut extracted = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        match match_at(&chars, i, catalog, options) {
            Some((len, class_index)) => {
                let span = &stream[i..i + len];
                extracted.push(ExtractedEmoji {
                    class_index,
                    source: span.iter().map(|&(_, c)| c).collect(),
                    positions: span.iter().map(|&(p, _)| p).collect(),
                });
                i += len;
            }
            None => {
                kept.push(stream[i]);
                i += 1;
            }
        }
    }
    (kept, extracted)
}

fn match_at(
    chars: &[char],
    start: usize,
    catalog: &EmojiCatalog,
    options: SegmentOptions,
) -> Option<(usize, ClassIndex)> {
    if !catalog.starters.contains(&chars[start]) {
        return None;
    }
    // A fallback candidate may interleave a selector and a modifier after every
    // codepoint of the base sequence, plus one trailing joiner.
    let max_scan = (3 * catalog.max_len + 1).min(chars.len() - start);
    for len in (1..=max_scan).rev() {
        let candidate = &chars[start..start + len];
        if options.letterwise_flags
            && candidate.iter().filter(|&&c| is_regional_indicator(c)).count() > 1
        {
            continue;
        }
        if let Some(class) = catalog.class_of(candidate) {
            return Some((len, class));
        }
        if options.modifier_fallback {
            if let Some(class) = catalog.fallback_class(candidate) {
                return Some((len, class));
            }
        }
    }
    None
}
