use std::path::PathBuf;

use avse_ci::data::{generate_noise, mix_at_snr, pseudo_speech, NoiseType, SpeechConfig};
use avse_ci::eval::{estoi, ncm, stoi};
use avse_ci::signal::{read_wav, Waveform};
use avse_ci::Error;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/stoi_golden")
}

#[test]
fn stoi_and_estoi_agree_with_reference_values() {
    let dir = golden_dir();
    let golden: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("golden.json")).unwrap()).unwrap();
    let pairs = golden["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 10);
    let mut worst: f64 = 0.0;
    for p in pairs {
        let clean = read_wav(dir.join(p["clean"].as_str().unwrap())).unwrap();
        let proc = read_wav(dir.join(p["proc"].as_str().unwrap())).unwrap();
        let (s, e) = (stoi(&clean, &proc).unwrap(), estoi(&clean, &proc).unwrap());
        let (gs, ge) = (p["stoi"].as_f64().unwrap(), p["estoi"].as_f64().unwrap());
        assert!((s - gs).abs() < 0.01, "{}: stoi {s} vs {gs}", p["clean"]);
        assert!((e - ge).abs() < 0.01, "{}: estoi {e} vs {ge}", p["clean"]);
        worst = worst.max((s - gs).abs()).max((e - ge).abs());
    }
    eprintln!("largest deviation from reference: {worst:.2e}");
}

fn speech(label: &str) -> Waveform {
    pseudo_speech(21, label, &SpeechConfig::default())
}

#[test]
fn self_identity_is_one() {
    for i in 0..3 {
        let x = speech(&format!("id{i}"));
        assert!((stoi(&x, &x).unwrap() - 1.0).abs() < 1e-8);
        assert!((estoi(&x, &x).unwrap() - 1.0).abs() < 1e-8);
        assert!((ncm(&x, &x).unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn metrics_fall_with_snr() {
    let x = speech("mono");
    let noise = generate_noise(NoiseType::White, x.len(), 22, "mono");
    let scores: Vec<[f64; 3]> = [12.0, 0.0, -12.0]
        .iter()
        .map(|&snr| {
            let y = mix_at_snr(&x, &noise, snr, 23, "mono").unwrap().noisy;
            [stoi(&x, &y).unwrap(), estoi(&x, &y).unwrap(), ncm(&x, &y).unwrap()]
        })
        .collect();
    for m in 0..3 {
        assert!(scores[0][m] > scores[1][m] && scores[1][m] > scores[2][m], "metric {m}: {scores:?}");
    }
}

#[test]
fn metrics_ignore_global_gain() {
    let x = speech("gain");
    let noise = generate_noise(NoiseType::Pink, x.len(), 24, "gain");
    let y = mix_at_snr(&x, &noise, 0.0, 25, "gain").unwrap().noisy;
    let base = [stoi(&x, &y).unwrap(), estoi(&x, &y).unwrap(), ncm(&x, &y).unwrap()];
    for c in [0.5, 2.0] {
        let yc = Waveform::new(y.samples.iter().map(|v| v * c).collect(), y.sample_rate_hz);
        let s = [stoi(&x, &yc).unwrap(), estoi(&x, &yc).unwrap(), ncm(&x, &yc).unwrap()];
        for m in 0..3 {
            assert!((s[m] - base[m]).abs() < 1e-6, "c = {c}, metric {m}");
        }
    }
}

#[test]
fn ncm_of_independent_noise_is_low() {
    for i in 0..3 {
        let x = speech(&format!("ind{i}"));
        let n = generate_noise(NoiseType::White, x.len(), 26 + i, "ind");
        assert!(ncm(&x, &n).unwrap() < 0.3);
    }
}

#[test]
fn silence_is_undefined() {
    let x = speech("sil");
    let z = Waveform::zeros(x.len(), 16000);
    for f in [stoi, estoi, ncm] {
        assert!(matches!(f(&z, &x), Err(Error::UndefinedMetric(_))));
        assert!(matches!(f(&x, &z), Err(Error::UndefinedMetric(_))));
    }
}
