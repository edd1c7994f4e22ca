#![no_main]

use aisac::experiment::{parse_spec_text, ExperimentSpec, VarianceStudySpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_spec_text(text);
    let _ = VarianceStudySpec::from_text(text);
    if let Ok(spec) = ExperimentSpec::from_text(text) {
        assert_eq!(ExperimentSpec::from_text(&spec.to_text()).expect("resolved spec parses"), spec);
    }
});
