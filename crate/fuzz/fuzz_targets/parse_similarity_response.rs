//! Similarity wire-response decoder must never panic; the first input byte
//! picks the expected matrix dimension so squareness checks get exercised.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, body)) = data.split_first() else {
        return;
    };
    // cap the dimension so a short body can't demand a huge allocation
    let _ = curvedetect::providers::parse_similarity_response(body, (n as usize) % 64);
});
