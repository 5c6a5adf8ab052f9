#![no_main]

use dioph::harness::csvio::Table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = Table::parse(text) {
            for h in t.header.clone() {
                let _ = t.floats(&h);
            }
        }
    }
});
