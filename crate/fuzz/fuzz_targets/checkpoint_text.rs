#![no_main]

use aisac::critic::LinearCritic;
use aisac::policy::{FeatureMap, GaussianPolicy, SoftmaxPolicy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = SoftmaxPolicy::from_text(text);
    let _ = GaussianPolicy::from_text(FeatureMap::Polynomial { dim: 2, degree: 2 }, text);
    let mut critic = LinearCritic::tabular(3, 2, 0.1);
    let _ = critic.load_weights(text);
});
