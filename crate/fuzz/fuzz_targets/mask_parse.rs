//! Mask file parsing must never panic on malformed input.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = gridfill::masks::parse_mask(data, "fuzz");
});
