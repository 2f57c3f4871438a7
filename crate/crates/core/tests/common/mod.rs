//! Shared helpers for the integration and acceptance suites: the curated
//! segmentation fixture, naive metric oracles and finite differences.
#![allow(dead_code)]

use std::path::PathBuf;

use emojimodal::emoji::{
    segment, EmojiCatalog, EmojiSequence, Segmentation, SegmentOptions,
};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_catalog() -> EmojiCatalog {
    EmojiCatalog::load(fixture("catalog.tsv")).expect("fixture catalog loads")
}

#[derive(Debug)]
pub struct SegmentationCase {
    pub line: usize,
    pub input: String,
    pub extracted: Vec<EmojiSequence>,
    pub stripped: String,
}

fn parse_tokens(field: &str, line: usize) -> String {
    let mut out = String::new();
    let mut rest = field.trim();
    while !rest.is_empty() {
        if let Some(quoted) = rest.strip_prefix('"') {
            let end = quoted.find('"').unwrap_or_else(|| panic!("line {line}: unterminated literal"));
            out.push_str(&quoted[..end]);
            rest = quoted[end + 1..].trim_start();
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let cp = u32::from_str_radix(&rest[..end], 16)
                .ok()
                .and_then(char::from_u32)
                .unwrap_or_else(|| panic!("line {line}: bad codepoint {:?}", &rest[..end]));
            out.push(cp);
            rest = rest[end..].trim_start();
        }
    }
    out
}

pub fn segmentation_cases() -> Vec<SegmentationCase> {
    let text = std::fs::read_to_string(fixture("segmentation.txt")).unwrap();
    let mut cases = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split(" ;").collect();
        assert_eq!(fields.len(), 3, "line {line}: expected three fields");
        cases.push(SegmentationCase {
            line,
            input: parse_tokens(fields[0], line),
            extracted: fields[1]
                .split_whitespace()
                .map(|h| EmojiSequence::from_hex(h).unwrap())
                .collect(),
            stripped: parse_tokens(fields[2], line),
        });
    }
    cases
}

/// Every fixture disagreement, as readable messages.
pub fn segmentation_mismatches(catalog: &EmojiCatalog) -> (usize, Vec<String>) {
    let cases = segmentation_cases();
    let mut failures = Vec::new();
    for case in &cases {
        let seg = segment(&case.input, catalog, SegmentOptions::default());
        let got: Vec<&EmojiSequence> = seg
            .emoji
            .iter()
            .map(|e| &catalog.entry(e.class_index).unwrap().sequence)
            .collect();
        let want: Vec<&EmojiSequence> = case.extracted.iter().collect();
        if got != want || seg.stripped_text != case.stripped {
            failures.push(format!(
                "line {}: got {:?} / {:?}, expected {:?} / {:?}",
                case.line,
                got.iter().map(|s| s.to_hex()).collect::<Vec<_>>(),
                seg.stripped_text,
                want.iter().map(|s| s.to_hex()).collect::<Vec<_>>(),
                case.stripped
            ));
        }
    }
    (cases.len(), failures)
}

/// Checks that the extracted emoji and the stripped text partition the input:
/// positions cover every char exactly once and reassemble the input.
pub fn check_partition(input: &str, seg: &Segmentation) -> Result<(), String> {
    let chars: Vec<char> = input.chars().collect();
    let mut owner: Vec<Option<char>> = vec![None; chars.len()];
    for e in &seg.emoji {
        let source: Vec<char> = e.source.chars().collect();
        if source.len() != e.positions.len() {
            return Err(format!("source/position length mismatch in {e:?}"));
        }
        if e.positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("positions not increasing in {e:?}"));
        }
        for (&p, &c) in e.positions.iter().zip(&source) {
            match owner.get_mut(p) {
                Some(slot @ None) => *slot = Some(c),
                _ => return Err(format!("position {p} claimed twice or out of range")),
            }
        }
    }
    let mut stripped = seg.stripped_text.chars();
    for (i, slot) in owner.iter_mut().enumerate() {
        if slot.is_none() {
            *slot = stripped.next();
            if slot.is_none() {
                return Err(format!("stripped text too short at position {i}"));
            }
        }
    }
    if stripped.next().is_some() {
        return Err("stripped text too long".into());
    }
    let rebuilt: String = owner.into_iter().map(Option::unwrap).collect();
    if rebuilt != input {
        return Err(format!("reassembled {rebuilt:?} != {input:?}"));
    }
    Ok(())
}

/// Random strings dense in the codepoints that matter to segmentation:
/// catalog codepoints, joiners, selectors, skin tones, regional indicators,
/// plus arbitrary scalar values and ASCII.
pub fn random_unicode_string<R: Rng>(rng: &mut R, catalog: &EmojiCatalog, max_len: usize) -> String {
    let special: Vec<char> = catalog
        .entries()
        .iter()
        .flat_map(|e| e.sequence.chars().iter().copied())
        .chain(['\u{200D}', '\u{FE0F}', '\u{FE0E}', '\u{20E3}', '\u{1F3FB}', '\u{1F3FF}'])
        .chain((0x1F1E6..=0x1F1FF).filter_map(char::from_u32))
        .collect();
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| match rng.random_range(0..10) {
            0..=5 => special[rng.random_range(0..special.len())],
            6 | 7 => rng.random_range(b' '..=b'~') as char,
            _ => loop {
                if let Some(c) = char::from_u32(rng.random_range(0..=0x10FFFF)) {
                    break c;
                }
            },
        })
        .collect()
}

/// Naive top-k: sort a copy of the row with explicit (score desc, index asc)
/// keys and look at the first k labels.
pub fn oracle_top_k(scores: &[Vec<f64>], rel: &[Vec<bool>], k: usize) -> f64 {
    let mut hits = 0;
    for (s, r) in scores.iter().zip(rel) {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
        if idx[..k].iter().any(|&j| r[j]) {
            hits += 1;
        }
    }
    hits as f64 / scores.len() as f64
}

/// Naive AP with distinct scores: the rank of an item is the number of items
/// scoring at least as high, and precision at that rank counts the relevant
/// ones among them.
pub fn oracle_ap(s: &[f64], r: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut total = 0;
    for j in 0..s.len() {
        if !r[j] {
            continue;
        }
        total += 1;
        let above: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= s[j]).collect();
        let relevant_above = above.iter().filter(|&&i| r[i]).count();
        sum += relevant_above as f64 / above.len() as f64;
    }
    sum / total as f64
}

pub fn oracle_msap(scores: &[Vec<f64>], rel: &[Vec<bool>]) -> f64 {
    scores.iter().zip(rel).map(|(s, r)| oracle_ap(s, r)).sum::<f64>() / scores.len() as f64
}

/// Mean over classes with a relevant document; `None` if there is none.
pub fn oracle_map(scores: &[Vec<f64>], rel: &[Vec<bool>]) -> Option<f64> {
    let c = scores[0].len();
    let aps: Vec<f64> = (0..c)
        .filter_map(|j| {
            let col: Vec<f64> = scores.iter().map(|row| row[j]).collect();
            let rcol: Vec<bool> = rel.iter().map(|row| row[j]).collect();
            rcol.iter().any(|&x| x).then(|| oracle_ap(&col, &rcol))
        })
        .collect();
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Random instance with distinct scores and at least one relevant class per row.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, c: usize) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let mut pool: Vec<f64> = (0..n * c).map(|i| i as f64 / (n * c) as f64).collect();
    for i in (1..pool.len()).rev() {
        pool.swap(i, rng.random_range(0..=i));
    }
    let scores: Vec<Vec<f64>> = pool.chunks(c).map(|ch| ch.to_vec()).collect();
    let rel = (0..n)
        .map(|_| {
            let mut row: Vec<bool> = (0..c).map(|_| rng.random_bool(0.2)).collect();
            let forced = rng.random_range(0..c);
            row[forced] = true;
            row
        })
        .collect();
    (scores, rel)
}

/// Largest relative error between analytic and finite-difference gradients
/// over every parameter exposed by `params`, as `(error, index)`.
///
/// Uses the five-point central stencil
/// `(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`, whose O(h^4) truncation
/// allows a step large enough to keep cancellation error near 1e-13 even
/// for gradient entries around 1e-9.
pub fn max_relative_error(
    analytic: &[f64],
    params: &mut [f64],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> (f64, usize) {
    let mut worst = (0.0, 0);
    for i in 0..params.len() {
        let orig = params[i];
        let mut at = |delta: f64, params: &mut [f64]| {
            params[i] = orig + delta;
            loss(params)
        };
        let near = at(step, params) - at(-step, params);
        let far = at(2.0 * step, params) - at(-2.0 * step, params);
        let numeric = (8.0 * near - far) / (12.0 * step);
        params[i] = orig;
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs());
        let err = if denom == 0.0 { 0.0 } else { (a - numeric).abs() / denom };
        if err > worst.0 {
            worst = (err, i);
        }
    }
    worst
}
