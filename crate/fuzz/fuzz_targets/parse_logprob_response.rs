//! Scorer wire-response decoder must never panic; the first input byte
//! picks the expected batch size so length mismatches get exercised too.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, body)) = data.split_first() else {
        return;
    };
    let _ = curvedetect::providers::parse_logprob_response(body, n as usize);
});
