#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = avse_ci::signal::wav::decode_wav(data) {
        assert!(w.samples.iter().all(|s| s.is_finite()));
    }
});
