#![no_main]

use std::sync::OnceLock;

use emojimodal::emoji::{segment, EmojiCatalog, SegmentOptions};
use libfuzzer_sys::fuzz_target;

fn catalog() -> &'static EmojiCatalog {
    static CATALOG: OnceLock<EmojiCatalog> = OnceLock::new();
    CATALOG.get_or_init(|| EmojiCatalog::parse(include_str!("../../crates/core/tests/fixtures/catalog.tsv")).unwrap())
}

fuzz_target!(|data: &[u8]| {
    let Some((&flags, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let options = SegmentOptions {
        letterwise_flags: flags & 1 != 0,
        modifier_fallback: flags & 2 != 0,
    };
    let seg = segment(text, catalog(), options);
    // Stripped output holds nothing left to extract.
    let again = segment(&seg.stripped_text, catalog(), options);
    assert!(again.emoji.is_empty(), "{text:?} left {:?}", again.emoji);
    assert_eq!(again.stripped_text, seg.stripped_text);
});
