#![no_main]

use dioph::poly::{parse_rational, rational_to_f64};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Some(r) = parse_rational(text) {
            let _ = rational_to_f64(&r);
        }
    }
});
