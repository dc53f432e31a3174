use avse_ci::avse::enhancer::fusion_graph;
use avse_ci::avse::{fusion_block, positional_encoding};
use avse_ci::frames::FrameMatrix;
use avse_ci::nn::{check_gradients, Tensor};
use avse_ci::seed;
use proptest::prelude::*;
use rand::Rng;

fn random(shape: &[usize], label: &str) -> Tensor {
    let mut r = seed::rng(21, label);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn fm(t: &Tensor) -> FrameMatrix {
    FrameMatrix::from_vec(t.shape[0], t.shape[1], t.data.clone())
}

#[test]
fn constant_visual_rows_give_constant_attention_term() {
    let audio = random(&[7, 4], "a");
    let v = [0.3, -0.2, 0.9];
    let visual = FrameMatrix::from_vec(7, 3, v.repeat(7));
    let (mq, mk, mv) = (random(&[4, 4], "q"), random(&[3, 4], "k"), random(&[3, 4], "v"));
    let out = fusion_block(&fm(&audio), Some(&visual), [&mq, &mk, &mv]).unwrap();
    let want: Vec<f64> = (0..4).map(|j| (0..3).map(|i| v[i] * mv.data[i * 4 + j]).sum()).collect();
    for t in 0..7 {
        for j in 0..4 {
            let term = out.get(t, j) - audio.data[t * 4 + j];
            assert!((term - want[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_value_projection_is_identity() {
    let audio = fm(&random(&[5, 4], "a0"));
    let visual = fm(&random(&[5, 3], "v0"));
    let (mq, mk) = (random(&[4, 4], "q0"), random(&[3, 4], "k0"));
    let out = fusion_block(&audio, Some(&visual), [&mq, &mk, &Tensor::zeros(&[3, 4])]).unwrap();
    assert_eq!(out, audio);
}

#[test]
fn two_frame_hand_case() {
    // d_a = d_k = 2, D_v = 1.
    let audio = [[1.0, 0.0], [0.0, 2.0]];
    let visual = [0.5, -1.0];
    let mq = [[1.0, 0.5], [0.0, 1.0]];
    let mk = [1.0, -1.0];
    let mv = [2.0, 3.0];
    // Position tables: width 2 for audio, width 1 for the visual rows.
    let pe = [[0.0, 1.0], [1f64.sin(), 1f64.cos()]];
    let pv = [0.0, 1f64.sin()];
    let q: Vec<[f64; 2]> = (0..2)
        .map(|t| {
            let a = [audio[t][0] + pe[t][0], audio[t][1] + pe[t][1]];
            let mut r = [0.0; 2];
            for j in 0..2 {
                r[j] = a[0] * mq[0][j] + a[1] * mq[1][j];
            }
            r
        })
        .collect();
    let k: Vec<[f64; 2]> = (0..2).map(|t| [(visual[t] + pv[t]) * mk[0], (visual[t] + pv[t]) * mk[1]]).collect();
    let v: Vec<[f64; 2]> = (0..2).map(|t| [visual[t] * mv[0], visual[t] * mv[1]]).collect();
    let mut want = [[0.0; 2]; 2];
    for t in 0..2 {
        let s: Vec<f64> = (0..2).map(|u| (q[t][0] * k[u][0] + q[t][1] * k[u][1]) / 2f64.sqrt()).collect();
        let z = s[0].exp() + s[1].exp();
        let w = [s[0].exp() / z, s[1].exp() / z];
        for j in 0..2 {
            want[t][j] = audio[t][j] + w[0] * v[0][j] + w[1] * v[1][j];
        }
    }
    let out = fusion_block(
        &FrameMatrix::from_vec(2, 2, audio.concat()),
        Some(&FrameMatrix::from_vec(2, 1, visual.to_vec())),
        [
            &Tensor::new(&[2, 2], mq.concat()).unwrap(),
            &Tensor::new(&[1, 2], mk.to_vec()).unwrap(),
            &Tensor::new(&[1, 2], mv.to_vec()).unwrap(),
        ],
    )
    .unwrap();
    for t in 0..2 {
        for j in 0..2 {
            assert!((out.get(t, j) - want[t][j]).abs() < 1e-12, "({t},{j})");
        }
    }
}

#[test]
fn length_mismatch_is_an_error() {
    let audio = fm(&random(&[5, 4], "a1"));
    let visual = fm(&random(&[4, 3], "v1"));
    let m = [random(&[4, 4], "q1"), random(&[3, 4], "k1"), random(&[3, 4], "v1m")];
    assert!(fusion_block(&audio, Some(&visual), [&m[0], &m[1], &m[2]]).is_err());
}

#[test]
fn fusion_gradients_cross_and_self() {
    let inputs = vec![
        random(&[4, 3], "ga"),
        random(&[4, 2], "gv"),
        random(&[3, 3], "gq"),
        random(&[2, 3], "gk"),
        random(&[2, 3], "gvv"),
    ];
    let cross = check_gradients(&inputs, 1e-5, |g, x| {
        let pa = g.constant(positional_encoding(4, 3, 2));
        let pv = g.constant(positional_encoding(4, 2, 2));
        let out = fusion_graph(g, x[0], x[1], [x[2], x[3], x[4]], [pa, pv], None)?;
        let sq = g.mul(out, out)?;
        let target = g.constant(Tensor::zeros(&[4, 3]));
        g.mse(sq, target, None)
    })
    .unwrap();
    assert!(cross.max_rel_error < 1e-4, "cross {}", cross.max_rel_error);

    let inputs = vec![random(&[4, 3], "sa"), random(&[3, 3], "sq"), random(&[3, 3], "sk"), random(&[3, 3], "sv")];
    let selfm = check_gradients(&inputs, 1e-5, |g, x| {
        let pos = g.constant(positional_encoding(4, 3, 0));
        let out = fusion_graph(g, x[0], x[0], [x[1], x[2], x[3]], [pos, pos], None)?;
        let sq = g.mul(out, out)?;
        let target = g.constant(Tensor::zeros(&[4, 3]));
        g.mse(sq, target, None)
    })
    .unwrap();
    assert!(selfm.max_rel_error < 1e-4, "self {}", selfm.max_rel_error);
}

#[test]
fn fusion_gradients_with_locality() {
    let mut lambda = random(&[1, 1], "gl");
    lambda.data[0] = lambda.data[0].abs() + 0.5;
    let inputs = vec![
        random(&[5, 3], "la"),
        random(&[5, 2], "lv"),
        random(&[3, 3], "lq"),
        random(&[2, 3], "lk"),
        random(&[2, 3], "lvv"),
        lambda,
    ];
    let r = check_gradients(&inputs, 1e-5, |g, x| {
        let pa = g.constant(positional_encoding(5, 3, 1));
        let pv = g.constant(positional_encoding(5, 2, 1));
        let out = fusion_graph(g, x[0], x[1], [x[2], x[3], x[4]], [pa, pv], Some(x[5]))?;
        let sq = g.mul(out, out)?;
        let target = g.constant(Tensor::zeros(&[5, 3]));
        g.mse(sq, target, None)
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "locality {}", r.max_rel_error);
}

#[test]
fn zero_locality_matches_plain_block() {
    let a = random(&[4, 3], "za");
    let v = random(&[4, 2], "zv");
    let m = [random(&[3, 3], "zq"), random(&[2, 3], "zk"), random(&[2, 3], "zvv")];
    let run = |lambda: Option<f64>| {
        let mut g = avse_ci::nn::Graph::new();
        let xa = g.constant(a.clone());
        let xv = g.constant(v.clone());
        let ms = [g.constant(m[0].clone()), g.constant(m[1].clone()), g.constant(m[2].clone())];
        let pa = g.constant(positional_encoding(4, 3, 0));
        let pv = g.constant(positional_encoding(4, 2, 0));
        let l = lambda.map(|x| g.constant(Tensor::filled(&[1, 1], x)));
        let out = fusion_graph(&mut g, xa, xv, ms, [pa, pv], l).unwrap();
        g.value(out).data.clone()
    };
    let plain = run(None);
    for (x, y) in plain.iter().zip(run(Some(0.0))) {
        assert!((x - y).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn fusion_preserves_shape(t in 1usize..9, seed_v in 0u64..50) {
        let label = format!("p{seed_v}");
        let audio = fm(&random(&[t, 4], &label));
        let m = [random(&[4, 4], "pq"), random(&[4, 4], "pk"), random(&[4, 4], "pv")];
        let out = fusion_block(&audio, None, [&m[0], &m[1], &m[2]]).unwrap();
        prop_assert_eq!((out.frames, out.width), (t, 4));
        prop_assert!(out.data.iter().all(|v| v.is_finite()));
    }
}
