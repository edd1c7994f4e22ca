#![no_main]

use aisac::mdp::TabularMdp;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mdp) = TabularMdp::from_text(text) {
            assert_eq!(TabularMdp::from_text(&mdp.to_text()).expect("round trip"), mdp);
        }
    }
});
