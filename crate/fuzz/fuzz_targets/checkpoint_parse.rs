//! Model checkpoint parsing must never panic on malformed input.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = gridfill::models::parse_model(data, "fuzz");
});
