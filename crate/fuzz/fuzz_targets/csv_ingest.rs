//! CSV ingest must reject arbitrary bytes gracefully: errors are fine,
//! panics and runaway allocations are not.

#![no_main]

use gridfill::dataset::ingest::ingest_reader;
use gridfill::dataset::CsvSchema;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = ingest_reader(data, &CsvSchema::default());
});
