#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = avse_ci::ace::elec_file::decode_text(text) {
        let again = avse_ci::ace::elec_file::decode_text(&avse_ci::ace::elec_file::encode_text(&e)).unwrap();
        assert_eq!(again, e);
    }
});
