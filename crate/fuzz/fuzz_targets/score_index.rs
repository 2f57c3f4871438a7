#![no_main]

use emojimodal::retrieval::ScoreIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = ScoreIndex::decode(data) {
        for i in 0..index.len() {
            assert_eq!(index.row(i).len(), index.num_classes());
        }
        let bytes = index.encode();
        assert_eq!(ScoreIndex::decode(&bytes).unwrap().encode(), bytes);
    }
});
