#![no_main]

use dioph::harness::CalibrationManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = CalibrationManifest::from_json(text) {
            let again = CalibrationManifest::from_json(&m.to_json()).expect("re-parse");
            assert_eq!(again, m);
        }
    }
});
