#![no_main]

use dioph::khintchine::ApproxFunction;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(psi) = text.parse::<ApproxFunction>() {
            let _ = psi.eval(2.0);
            let _ = psi.validate(64);
        }
    }
});
