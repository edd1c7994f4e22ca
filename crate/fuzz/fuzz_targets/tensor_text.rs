#![no_main]

use aisac::tensor_text;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Anything that parses must survive a write/parse round trip unchanged.
    if let Ok(file) = tensor_text::parse(text) {
        let again = tensor_text::parse(&tensor_text::write(&file.tensors)).expect("written text parses");
        assert_eq!(file, again);
    }
});
