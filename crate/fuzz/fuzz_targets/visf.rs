#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = avse_ci::avse::visual::decode_visf(data, "fuzz") {
        assert!(t.data.data.iter().all(|v| v.is_finite()));
    }
});
