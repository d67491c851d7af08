//! Binary tensor decoding must never panic or overrun, whatever the bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = gridfill::tensor::Tensor::decode(data);
});
