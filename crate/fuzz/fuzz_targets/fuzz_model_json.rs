#![no_main]

use arclin::latent::LatentModel;
use libfuzzer_sys::fuzz_target;

// Any bytes must either decode into a shape-consistent model or fail with an
// error. A decoded model round-trips through its own serialization.
fuzz_target!(|data: &[u8]| {
    if let Ok(model) = LatentModel::from_json_bytes(data) {
        let text = model.to_json_string().expect("model serializes");
        LatentModel::from_json_bytes(text.as_bytes()).expect("serialized model decodes back");
    }
});
