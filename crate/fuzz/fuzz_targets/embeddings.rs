#![no_main]

use emojimodal::zeroshot::EmbeddingTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = EmbeddingTable::parse(text);
});
