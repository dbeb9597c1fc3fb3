use super::*;
use crate::error::Error;
use crate::rng::RandomStream;
use rand::Rng;

fn t2(rows: &[&[f64]]) -> Tensor<f64> {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn matmul_identity_and_dot() {
    let mut tape = Tape::<f64>::new();
    let i = tape.constant(t2(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let m = tape.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let p = tape.matmul(i, m).unwrap();
    assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

    let a = tape.constant(t2(&[&[1.0, 2.0]]));
    let b = tape.constant(t2(&[&[3.0], &[4.0]]));
    let d = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(d).data(), &[11.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    match tape.matmul(a, b) {
        Err(Error::Dimension { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_is_ones_times_b_transpose() {
    let mut rng = RandomStream::new(11, "matmul-grad");
    let a = Tensor::from_fn(&[3, 4], |_| rng.random_range(-1.0..1.0));
    let b = Tensor::from_fn(&[4, 2], |_| rng.random_range(-1.0..1.0));
    let mut tape = Tape::new();
    let av = tape.leaf(a.clone());
    let bv = tape.constant(b.clone());
    let p = tape.matmul(av, bv).unwrap();
    let s = tape.sum(p);
    let g = tape.backward(s).unwrap().get(&tape, av);
    for i in 0..3 {
        for k in 0..4 {
            let expect: f64 = b.row(k).iter().sum();
            assert!(close(g.data()[i * 4 + k], expect, 1e-12));
        }
    }
    let err = grad_check(
        |t, x| {
            let bb = t.constant(b.clone());
            let p = t.matmul(x, bb)?;
            Ok(t.sum(p))
        },
        &a,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn activation_definitions() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap());
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
    let z = tape.constant(Tensor::scalar(0.0));
    let th = tape.tanh(z);
    let sg = tape.sigmoid(z);
    assert_eq!(tape.value(th).item(), 0.0);
    assert_eq!(tape.value(sg).item(), 0.5);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![0.0, 1.0, -1.0]).unwrap());
    let r = tape.relu(x);
    let s = tape.sum(r);
    let g = tape.backward(s).unwrap().get(&tape, x);
    assert_eq!(g.data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn log_softmax_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t2(&[&[0.0, 0.0], &[0.0, 3f64.ln()]]));
    let y = tape.log_softmax(x);
    let v = tape.value(y).data().to_vec();
    let ln2 = 2f64.ln();
    assert!(close(v[0], -ln2, 1e-15) && close(v[1], -ln2, 1e-15));
    assert!(close(v[2], -(4f64.ln()), 1e-15));
    assert!(close(v[3], (0.75f64).ln(), 1e-15));

    let shifted = tape.constant(t2(&[&[1000.0, 1000.0], &[1000.0, 1000.0 + 3f64.ln()]]));
    let ys = tape.log_softmax(shifted);
    for (a, b) in tape.value(ys).data().iter().zip(&v) {
        assert!(close(*a, *b, 1e-12));
    }
}

#[test]
fn nll_examples() {
    let mut tape = Tape::<f64>::new();
    let logits = tape.constant(Tensor::zeros(&[1, 100]));
    let lp = tape.log_softmax(logits);
    let l = tape.nll_loss(lp, &[37]).unwrap();
    assert!(close(tape.value(l).item(), 100f64.ln(), 1e-12));

    let perfect = tape.constant(t2(&[&[0.0, f64::NEG_INFINITY]]));
    let l0 = tape.nll_loss(perfect, &[0]).unwrap();
    assert_eq!(tape.value(l0).item(), 0.0);

    let rows = tape.constant(t2(&[&[0.5f64.ln(), 0.5f64.ln()], &[0.25f64.ln(), 0.75f64.ln()]]));
    let lb = tape.nll_loss(rows, &[0, 0]).unwrap();
    assert!(close(tape.value(lb).item(), (2f64.ln() + 4f64.ln()) / 2.0, 1e-12));
    assert!(close(tape.value(lb).item(), 1.0397, 1e-4));

    assert!(matches!(
        tape.nll_loss(rows, &[0, 2]),
        Err(Error::Index { index: 2, bound: 2, .. })
    ));
}

#[test]
fn embedding_gather_and_scatter() {
    let mut tape = Tape::<f64>::new();
    let table = tape.leaf(t2(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
    let e0 = tape.embedding(table, &[0]).unwrap();
    assert_eq!(tape.value(e0).data(), &[1.0, 2.0]);

    let e = tape.embedding(table, &[1, 1]).unwrap();
    let s = tape.sum(e);
    let g = tape.backward(s).unwrap().get(&tape, table);
    assert_eq!(g.data(), &[0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);

    assert!(matches!(
        tape.embedding(table, &[3]),
        Err(Error::Index { index: 3, bound: 3, .. })
    ));
}

#[test]
fn conv_delta_kernel_is_identity() {
    let mut rng = RandomStream::new(5, "conv-delta");
    let img = Tensor::from_fn(&[1, 9, 7], |_| rng.random_range(0.0..1.0));
    let mut k = Tensor::<f64>::zeros(&[1, 1, 5, 5]);
    k.data_mut()[12] = 1.0;
    let mut tape = Tape::new();
    let x = tape.constant(img.clone());
    let kv = tape.constant(k);
    let y = tape.conv2d(x, kv, None, 1, 2).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 9, 7]);
    assert_eq!(tape.value(y).data(), img.data());
}

#[test]
fn conv_shape_chain_reaches_576() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::zeros(&[2, 1, 28, 28]));
    let k1 = tape.constant(Tensor::zeros(&[64, 1, 5, 5]));
    let k2 = tape.constant(Tensor::zeros(&[64, 64, 5, 5]));
    let k3 = tape.constant(Tensor::zeros(&[64, 64, 5, 5]));
    let a = tape.conv2d(x, k1, None, 2, 2).unwrap();
    assert_eq!(tape.value(a).shape(), &[2, 64, 14, 14]);
    let b = tape.conv2d(a, k2, None, 2, 2).unwrap();
    assert_eq!(tape.value(b).shape(), &[2, 64, 7, 7]);
    let c = tape.conv2d(b, k3, None, 2, 1).unwrap();
    assert_eq!(tape.value(c).shape(), &[2, 64, 3, 3]);
    assert_eq!(tape.value(c).numel() / 2, 576);
}

#[test]
fn conv_rejects_empty_output() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[1, 3, 3]));
    let k = tape.constant(Tensor::zeros(&[1, 1, 5, 5]));
    assert!(matches!(tape.conv2d(x, k, None, 1, 0), Err(Error::Dimension { .. })));
}

#[test]
fn dropout_modes() {
    let mut rng = RandomStream::new(1, "dropout");
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::from_fn(&[4, 5], |i| i as f64));
    let same = tape.dropout(x, 0.0, &mut rng, true).unwrap();
    assert_eq!(tape.value(same), tape.value(x));
    let eval = tape.dropout(x, 0.5, &mut rng, false).unwrap();
    assert_eq!(tape.value(eval), tape.value(x));
    assert!(matches!(tape.dropout(x, 1.0, &mut rng, true), Err(Error::Parameter(_))));
    assert!(matches!(tape.dropout(x, -0.1, &mut rng, true), Err(Error::Parameter(_))));
}

#[test]
fn dropout_preserves_mean_in_expectation() {
    let mut rng = RandomStream::new(2, "dropout-mc");
    let mut tape = Tape::<f64>::new();
    let n = 100_000;
    let x = tape.constant(Tensor::filled(&[n], 1.5));
    let y = tape.dropout(x, 0.5, &mut rng, true).unwrap();
    let mean = tape.value(y).data().iter().sum::<f64>() / n as f64;
    assert!((mean - 1.5).abs() / 1.5 < 0.01, "{mean}");
}

#[test]
fn batchnorm_examples() {
    let mut tape = Tape::<f64>::new();
    let gamma = tape.constant(Tensor::filled(&[1], 1.0));
    let beta = tape.constant(Tensor::filled(&[1], 0.3));
    let mut st = BatchNormState::new(1);
    let x = tape.constant(Tensor::filled(&[4, 1], 2.5));
    let y = tape.batchnorm1d(x, gamma, beta, &mut st, true).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| close(v, 0.3, 1e-12)));

    let beta0 = tape.constant(Tensor::zeros(&[1]));
    let mut st = BatchNormState::new(1);
    st.eps = 1e-12;
    let x = tape.constant(t2(&[&[-1.0], &[1.0]]));
    let y = tape.batchnorm1d(x, gamma, beta0, &mut st, true).unwrap();
    assert!(close(tape.value(y).data()[0], -1.0, 1e-9));
    assert!(close(tape.value(y).data()[1], 1.0, 1e-9));

    let one = tape.constant(Tensor::zeros(&[1, 1]));
    assert!(matches!(
        tape.batchnorm1d(one, gamma, beta0, &mut st, true),
        Err(Error::BatchSize(1))
    ));
}

#[test]
fn batchnorm_running_mean_recursion() {
    let mut tape = Tape::<f64>::new();
    let gamma = tape.constant(Tensor::filled(&[2], 1.0));
    let beta = tape.constant(Tensor::zeros(&[2]));
    let mut st = BatchNormState::new(2);
    st.momentum = 0.1;
    let b1 = tape.constant(t2(&[&[1.0, 10.0], &[3.0, 20.0]]));
    let b2 = tape.constant(t2(&[&[5.0, 0.0], &[7.0, 4.0]]));
    tape.batchnorm1d(b1, gamma, beta, &mut st, true).unwrap();
    tape.batchnorm1d(b2, gamma, beta, &mut st, true).unwrap();
    // rm1 = 0.9*0 + 0.1*m1 ; rm2 = 0.9*rm1 + 0.1*m2
    let expect0 = 0.9 * (0.1 * 2.0) + 0.1 * 6.0;
    let expect1 = 0.9 * (0.1 * 15.0) + 0.1 * 2.0;
    assert!(close(st.running_mean[0], expect0, 1e-12));
    assert!(close(st.running_mean[1], expect1, 1e-12));
    // unbiased batch variances: 2 and 50, then 2 and 8
    let rv0 = 0.9 * (0.9 * 1.0 + 0.1 * 2.0) + 0.1 * 2.0;
    let rv1 = 0.9 * (0.9 * 1.0 + 0.1 * 50.0) + 0.1 * 8.0;
    assert!(close(st.running_var[0], rv0, 1e-12));
    assert!(close(st.running_var[1], rv1, 1e-12));
}

#[test]
fn backward_linear_and_quadratic() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
    let s = tape.sum(x);
    assert_eq!(tape.backward(s).unwrap().get(&tape, x).data(), &[1.0, 1.0, 1.0]);
    let sq = tape.mul(x, x).unwrap();
    let q = tape.sum(sq);
    assert_eq!(tape.backward(q).unwrap().get(&tape, x).data(), &[2.0, -4.0, 1.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[2]));
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
}

#[test]
fn unreached_gradients_are_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::filled(&[2], 1.0));
    let unused = tape.leaf(Tensor::filled(&[3], 1.0));
    let s = tape.sum(x);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(&tape, unused).data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn composite_embedding_classifier_gradient() {
    let mut rng = RandomStream::new(3, "composite");
    let mut store = ParamStore::<f64>::new();
    let emb = store.add_uniform("emb", &[6, 4], 4, &mut rng);
    let w1 = store.add_uniform("w1", &[4, 5], 4, &mut rng);
    let b1 = store.add_uniform("b1", &[5], 4, &mut rng);
    let w2 = store.add_uniform("w2", &[5, 3], 5, &mut rng);
    let err = grad_check_params(
        &store,
        |t, s| {
            let e = t.param(s, emb);
            let h = t.embedding(e, &[0, 3, 3, 5])?;
            let w = t.param(s, w1);
            let b = t.param(s, b1);
            let z = t.matmul(h, w)?;
            let z = t.add_bias(z, b)?;
            let a = t.tanh(z);
            let w = t.param(s, w2);
            let o = t.matmul(a, w)?;
            let lp = t.log_softmax(o);
            t.nll_loss(lp, &[0, 2, 1, 1])
        },
        1e-6,
        None,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn grad_check_quadratic_and_planted_bug() {
    let mut rng = RandomStream::new(4, "quad");
    let p = Tensor::from_fn(&[5], |_| rng.random_range(-2.0..2.0));
    let err = grad_check(
        |t, x| {
            let sq = t.mul(x, x)?;
            Ok(t.sum(sq))
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-8, "{err}");

    let f = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let doubled: Vec<f64> = p.data().iter().map(|x| 4.0 * x).collect();
    let numeric = numeric_gradient(f, p.data(), 1e-5, None);
    let bad = max_relative_error(&doubled, &numeric);
    assert!(bad > 0.5 && bad <= 1.0 + 1e-6, "{bad}");
}

#[test]
fn grad_check_relu_network_away_from_kinks() {
    let mut rng = RandomStream::new(8, "relu-net");
    let w = Tensor::from_fn(&[3, 6], |_| rng.random_range(-1.0..1.0));
    // draw inputs until every pre-activation clears the kink by 0.1
    let x = loop {
        let cand = Tensor::from_fn(&[2, 3], |_| rng.random_range(-1.0..1.0));
        let mut t = Tape::new();
        let xv = t.constant(cand.clone());
        let wv = t.constant(w.clone());
        let z = t.matmul(xv, wv).unwrap();
        if t.value(z).data().iter().all(|v: &f64| v.abs() > 0.1) {
            break cand;
        }
    };
    let err = grad_check(
        |t, xv| {
            let wv = t.constant(w.clone());
            let z = t.matmul(xv, wv)?;
            let a = t.relu(z);
            let sq = t.mul(a, a)?;
            Ok(t.sum(sq))
        },
        &x,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn forward_backward_is_bitwise_repeatable() {
    let run = || {
        let mut rng = RandomStream::new(9, "repeat");
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::from_fn(&[8, 8], |i| (i as f32).sin()));
        let d = tape.dropout(x, 0.5, &mut rng, true).unwrap();
        let lp = tape.log_softmax(d);
        let l = tape.nll_loss(lp, &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let g = tape.backward(l).unwrap().get(&tape, x);
        (tape.value(l).item().to_bits(), g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}
