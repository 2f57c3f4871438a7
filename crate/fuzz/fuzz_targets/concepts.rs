#![no_main]

use emojimodal::zeroshot::parse_concept_file;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_concept_file(text);
});
