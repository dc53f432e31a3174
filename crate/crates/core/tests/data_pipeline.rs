use avse_ci::avse::synth_visual_features;
use avse_ci::data::{build_corpus, synth_corpus, CorpusConfig, Manifest, NoiseType, SpeechConfig, Split};
use avse_ci::signal::read_wav;
use avse_ci::Error;

fn small_config() -> CorpusConfig {
    CorpusConfig {
        seed: 5,
        n_train: 6,
        n_val: 2,
        n_test: 8,
        ..Default::default()
    }
}

#[test]
fn built_corpus_is_complete_and_mismatched() {
    let dir = tempfile::tempdir().unwrap();
    let built = build_corpus(dir.path(), &small_config()).unwrap();
    let m = Manifest::load(dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.entries, built.entries);
    assert_eq!(m.split(Split::Train).count(), 6);
    assert_eq!(m.split(Split::Val).count(), 2);
    assert_eq!(m.split(Split::Test).count(), 8);

    let test_snrs: Vec<f64> = m.split(Split::Test).map(|e| e.snr_db).collect();
    for s in [-1.0, -4.0, -7.0, -10.0] {
        assert!(test_snrs.contains(&s));
    }
    assert!(test_snrs.iter().all(|s| [-1.0, -4.0, -7.0, -10.0].contains(s)));
    for e in m.split(Split::Train) {
        assert!([-12.0, -6.0, 0.0, 6.0, 12.0].contains(&e.snr_db));
    }
    let train_types: Vec<NoiseType> = m.entries.iter().filter(|e| e.split != Split::Test).map(|e| e.noise_type).collect();
    assert!(m.split(Split::Test).all(|e| !train_types.contains(&e.noise_type)));

    for e in &m.entries {
        let u = m.load_utterance(e).unwrap();
        assert!(u.noisy.peak() <= 1.0);
        read_wav(m.resolve(&e.noise_path)).unwrap();
        let v = m.load_visual(e).unwrap();
        assert_eq!(v.frames(), u.clean.len().div_ceil(640));
        assert_eq!(v.dim(), 32);
        // the stored visual track is derived from the clean signal
        let again = synth_visual_features(&u.clean, 32, 25.0, 0.1, 5, &e.id).unwrap();
        let err = again.data.data.iter().zip(&v.data.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5);
    }
}

#[test]
fn corpus_build_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = CorpusConfig {
        n_train: 2,
        n_val: 1,
        n_test: 2,
        ..small_config()
    };
    build_corpus(a.path(), &cfg).unwrap();
    build_corpus(b.path(), &cfg).unwrap();
    for rel in ["manifest.json", "noisy/test-001.wav", "visual/train-000.visf", "noise/val-000.wav"] {
        assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn overlapping_noise_lists_are_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CorpusConfig {
        test_noises: vec![NoiseType::Pink, NoiseType::White],
        ..small_config()
    };
    assert!(matches!(build_corpus(dir.path(), &cfg), Err(Error::Protocol(_))));
    let cfg = CorpusConfig {
        test_snrs_db: vec![0.0, -4.0],
        ..small_config()
    };
    assert!(matches!(build_corpus(dir.path(), &cfg), Err(Error::Protocol(_))));
}

#[test]
fn tampered_manifest_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_corpus(
        dir.path(),
        &CorpusConfig {
            n_train: 1,
            n_val: 0,
            n_test: 1,
            ..small_config()
        },
    )
    .unwrap();
    let mut v: serde_json::Value = serde_json::from_slice(&m.to_json()).unwrap();
    v["entries"][1]["noise_type"] = serde_json::json!("white");
    assert!(matches!(Manifest::parse(&serde_json::to_vec(&v).unwrap()), Err(Error::Protocol(_))));
    let mut v: serde_json::Value = serde_json::from_slice(&m.to_json()).unwrap();
    v["entries"][0]["clean_path"] = serde_json::json!("../../etc/passwd");
    assert!(matches!(Manifest::parse(&serde_json::to_vec(&v).unwrap()), Err(Error::Format(_))));
}

#[test]
fn missing_visual_names_the_utterance() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_corpus(
        dir.path(),
        &CorpusConfig {
            n_train: 1,
            n_val: 0,
            n_test: 1,
            ..small_config()
        },
    )
    .unwrap();
    let e = &m.entries[0];
    std::fs::remove_file(m.resolve(&e.visual_path)).unwrap();
    match m.load_visual(e) {
        Err(Error::MissingVisual(id)) => assert_eq!(id, e.id),
        other => panic!("{other:?}"),
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn visual_features_track_the_clean_envelope() {
    let corpus = synth_corpus(10, 9, "v", &SpeechConfig::default()).unwrap();
    let mut total = 0.0;
    let mut count = 0;
    for (id, w) in &corpus {
        let t = synth_visual_features(w, 32, 25.0, 0.1, 9, id).unwrap();
        let env: Vec<f64> = (0..t.frames())
            .map(|f| {
                let s = &w.samples[f * 640..((f + 1) * 640).min(w.len())];
                (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt()
            })
            .collect();
        for d in 0..t.dim() {
            let col: Vec<f64> = (0..t.frames()).map(|f| t.data.get(f, d)).collect();
            total += pearson(&col, &env).abs();
            count += 1;
        }
    }
    let mean = total / count as f64;
    assert!(mean > 0.3, "{mean}");
}
