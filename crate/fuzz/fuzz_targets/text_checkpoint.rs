#![no_main]

use emojimodal::text_model::TextClassifier;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = TextClassifier::decode_checkpoint(data) {
        let bytes = model.encode_checkpoint();
        assert_eq!(TextClassifier::decode_checkpoint(&bytes).unwrap().encode_checkpoint(), bytes);
    }
});
