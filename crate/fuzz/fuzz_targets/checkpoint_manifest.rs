#![no_main]
use avse_ci::nn::checkpoint::{decode_blob, parse_manifest};
use libfuzzer_sys::fuzz_target;

// Input layout: manifest JSON, a NUL byte, then bytes offered to the first tensor entry.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|b| *b == 0).unwrap_or(data.len());
    if let Ok(m) = parse_manifest(&data[..split]) {
        if let Some(e) = m.tensors.first() {
            let _ = decode_blob(e, data.get(split + 1..).unwrap_or(&[]));
        }
    }
});
