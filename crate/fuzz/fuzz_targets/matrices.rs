#![no_main]

use emojimodal::metrics::{parse_label_matrix, parse_score_matrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_score_matrix(text) {
        assert!(rows.iter().flatten().all(|v| v.is_finite()));
    }
    let _ = parse_label_matrix(text);
});
