#![no_main]

use std::sync::OnceLock;

use emojimodal::corpus::{ingest_records, parse_records, IngestOptions};
use emojimodal::emoji::EmojiCatalog;
use libfuzzer_sys::fuzz_target;

fn catalog() -> &'static EmojiCatalog {
    static CATALOG: OnceLock<EmojiCatalog> = OnceLock::new();
    CATALOG.get_or_init(|| EmojiCatalog::parse(include_str!("../../crates/core/tests/fixtures/catalog.tsv")).unwrap())
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_records(text) {
        let _ = ingest_records(records, catalog(), IngestOptions::default());
    }
});
