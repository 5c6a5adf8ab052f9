#![no_main]

use dioph::harness::{Experiment, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mut cfg) = RunConfig::parse(text) {
            let _ = cfg.hash();
            let _ = cfg.validate(Experiment::LatticeSelftest);
        }
    }
});
