//! Fold file parsing must never panic on malformed input.

#![no_main]

use std::io::BufReader;

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = gridfill::dataset::split::parse_folds(BufReader::new(data));
});
