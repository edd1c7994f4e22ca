#![no_main]

use aisac::experiment::parse_csv_column;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // The first header names the column, so well-formed inputs get past the lookup.
        let column = text.split([',', '\n']).next().unwrap_or("");
        let _ = parse_csv_column(text, column.trim());
    }
});
