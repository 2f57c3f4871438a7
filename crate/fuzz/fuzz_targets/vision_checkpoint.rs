#![no_main]

use emojimodal::vision_model::LinearSoftmaxModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = LinearSoftmaxModel::decode_checkpoint(data) {
        let bytes = model.encode_checkpoint();
        assert_eq!(LinearSoftmaxModel::decode_checkpoint(&bytes).unwrap().encode_checkpoint(), bytes);
    }
});
