#![no_main]
use libfuzzer_sys::fuzz_target;

// Input layout: JSON sidecar, a NUL byte, then the f32 payload.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|b| *b == 0) else { return };
    let Ok(sidecar) = std::str::from_utf8(&data[..split]) else { return };
    let _ = avse_ci::ace::elec_file::decode_binary(&data[split + 1..], sidecar);
});
