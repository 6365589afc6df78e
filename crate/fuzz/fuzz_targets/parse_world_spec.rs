//! World-spec parser must never panic on arbitrary input, and accepted
//! specs must pass their own validation invariants.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(body) = std::str::from_utf8(data) {
        let _ = curvedetect::config::parse_world_spec(body);
    }
});
