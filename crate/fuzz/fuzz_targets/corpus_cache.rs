#![no_main]

use emojimodal::corpus::{decode_corpus, encode_corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(corpus) = decode_corpus(data) {
        let bytes = encode_corpus(&corpus);
        let again = decode_corpus(&bytes).expect("re-encoded corpus must decode");
        assert_eq!(encode_corpus(&again), bytes);
    }
});
