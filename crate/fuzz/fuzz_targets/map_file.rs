#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = dioph::manifold::parse_map_file(text) {
            // a parsed map must evaluate at its own center
            let c = map.domain().center.clone();
            let _ = map.eval_full(&c);
        }
    }
});
