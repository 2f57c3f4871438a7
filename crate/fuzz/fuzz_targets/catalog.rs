#![no_main]

use emojimodal::emoji::EmojiCatalog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(catalog) = EmojiCatalog::parse(text) {
        let again = EmojiCatalog::parse(&catalog.to_tsv()).expect("serialized catalog must parse");
        assert_eq!(again.len(), catalog.len());
    }
});
