//! JSONL dataset parser must never panic, whatever the bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = curvedetect::eval::parse_dataset(std::io::Cursor::new(data), "fuzz");
});
