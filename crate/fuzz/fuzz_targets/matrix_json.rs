#![no_main]

use dioph::lattice::Matrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = Matrix::from_json(text) {
            let _ = m.det();
        }
    }
});
