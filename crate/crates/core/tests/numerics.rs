use landtime_core::numerics::container::{decode, encode, read_manifest};
use landtime_core::numerics::*;
use landtime_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, data).unwrap()
}

/// Central differences of `f` w.r.t. every entry of `x`.
fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            p[i] += h;
            let fp = f(&p);
            p[i] -= 2.0 * h;
            (fp - f(&p)) / (2.0 * h)
        })
        .collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let scale = x.abs().max(y.abs()).max(1.0);
        assert!((x - y).abs() <= tol * scale, "entry {i}: {x} vs {y}");
    }
}

fn sample(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
}

#[test]
fn tensor_rejects_bad_shapes() {
    assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
    assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    let x = Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).unwrap();
    assert_eq!(x.reshape(&[3, 2]).unwrap().shape(), &[3, 2]);
    assert!(x.reshape(&[4, 2]).is_err());
}

#[test]
fn matmul_matches_hand_product() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
    let b = tape.constant(t(&[3, 2], &[7., 8., 9., 10., 11., 12.]));
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[58., 64., 139., 154.]);
    let bad = tape.constant(t(&[2, 2], &[0.; 4]));
    assert!(matches!(tape.matmul(a, bad), Err(Error::Dimension { .. })));
}

/// Builds a scalar loss through most tape ops and checks every input gradient.
#[test]
fn composite_graph_gradients_match_finite_differences() {
    let (r, c) = (4, 5);
    let xs = sample(r * c, 1);
    let ws = sample(c * c, 2);
    let bs = sample(c, 3);
    let gs = sample(c, 4).iter().map(|v| 1.0 + 0.3 * v).collect::<Vec<_>>();
    let table = sample(3 * c, 5);
    let build = |x: &[f64], w: &[f64], b: &[f64], g: &[f64], tb: &[f64]| {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(t(&[r, c], x), true);
        let w = tape.input(t(&[c, c], w), true);
        let b = tape.input(t(&[c], b), true);
        let g = tape.input(t(&[c], g), true);
        let tb = tape.input(t(&[3, c], tb), true);
        let beta = tape.constant(Tensor::zeros(&[c]));
        let h = tape.matmul(x, w).unwrap();
        let h = tape.add_bias(h, b).unwrap();
        let e = tape.gather_rows(tb, vec![0, 2, 2, 1]).unwrap();
        let h = tape.add(h, e).unwrap();
        let h = tape.gelu(h).unwrap();
        let h = tape.layer_norm(h, g, beta, 1e-5).unwrap();
        let s = tape.softmax_rows(h).unwrap();
        let m = tape.mul(s, h).unwrap();
        let m = tape.reshape(m, &[2, 2 * c]).unwrap();
        let m = tape.scale(m, 3.0).unwrap();
        let l = tape.sum(m).unwrap();
        (tape, [x, w, b, g, tb], l)
    };
    let (tape, vars, loss) = build(&xs, &ws, &bs, &gs, &table);
    let grads = tape.backward(loss).unwrap();
    let inputs = [xs.clone(), ws.clone(), bs.clone(), gs.clone(), table.clone()];
    for (k, v) in vars.iter().enumerate() {
        let num = numeric_grad(&inputs[k], |p| {
            let mut ins = inputs.clone();
            ins[k] = p.to_vec();
            let (tp, _, l) = build(&ins[0], &ins[1], &ins[2], &ins[3], &ins[4]);
            tp.value(l).data()[0]
        });
        assert_close(grads.get(*v).unwrap(), &num, 1e-6);
    }
}

#[test]
fn shared_operand_matmul_gradient() {
    let xs = sample(9, 7);
    let f = |x: &[f64]| {
        let mut tape = Tape::<f64>::new();
        let a = tape.input(t(&[3, 3], x), true);
        let p = tape.matmul(a, a).unwrap();
        let l = tape.sum(p).unwrap();
        (tape, a, l)
    };
    let (tape, a, l) = f(&xs);
    let g = tape.backward(l).unwrap();
    let num = numeric_grad(&xs, |p| {
        let (tp, _, l) = f(p);
        tp.value(l).data()[0]
    });
    assert_close(g.get(a).unwrap(), &num, 1e-6);
}

#[test]
fn softmax_handles_masked_entries_and_rejects_empty_rows() {
    let mut tape = Tape::<f64>::new();
    let ninf = f64::NEG_INFINITY;
    let x = tape.input(t(&[2, 3], &[1.0, ninf, 1.0, ninf, 0.0, ninf]), false);
    let s = tape.softmax_rows(x).unwrap();
    assert_eq!(tape.value(s).data(), &[0.5, 0.0, 0.5, 0.0, 1.0, 0.0]);
    let y = tape.input(t(&[1, 2], &[ninf, ninf]), false);
    assert!(matches!(tape.softmax_rows(y), Err(Error::DegenerateRow { row: 0 })));
}

#[test]
fn gelu_is_exact_erf_form() {
    // x * Phi(x) at a few points, Phi from the complementary error function
    let phi = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
    for x in [-3.0, -1.0, -0.25, 0.0, 0.5, 2.0] {
        assert!((gelu_scalar(x) - x * phi(x)).abs() < 1e-15);
    }
    assert!((gelu_scalar(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-12);
}

#[test]
fn non_finite_results_are_rejected() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::full(&[1, 2], f32::MAX));
    let err = tape.scale(x, 10.0).unwrap_err();
    assert!(err.is_numerical());
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::zeros(&[2, 2]), true);
    let y = tape.gelu(x).unwrap();
    assert!(matches!(tape.backward(y), Err(Error::NonScalarLoss(_))));
}

#[test]
fn dropout_is_identity_at_zero_and_scales_kept_units() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::full(&[50, 40], 1.0), true);
    assert_eq!(tape.dropout(x, 0.0, &mut rng).unwrap(), x);
    let d = tape.dropout(x, 0.25, &mut rng).unwrap();
    let vals = tape.value(d).data();
    assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
    let kept = vals.iter().filter(|&&v| v > 0.0).count() as f64 / vals.len() as f64;
    assert!((kept - 0.75).abs() < 0.03, "kept fraction {kept}");
}

/// Independent scalar replay of the AdamW update rule.
fn adamw_oracle(p0: f64, grads: &[f64], lr: f64, c: AdamWConfig) -> f64 {
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    for (i, g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        p -= lr * c.weight_decay * p;
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        let mh = m / (1.0 - c.beta1.powi(t));
        let vh = v / (1.0 - c.beta2.powi(t));
        p -= lr * mh / (vh.sqrt() + c.eps);
    }
    p
}

#[test]
fn adamw_matches_scalar_replay() {
    let cfg = AdamWConfig::default();
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", t(&[2], &[0.5, -2.0]));
    let mut opt = AdamW::new(cfg, &store);
    let grads = [[0.3, -1.0], [0.1, 2.0], [-0.4, 0.5]];
    for g in &grads {
        store.get_mut(id).grad.data_mut().copy_from_slice(g);
        opt.step(&mut store, 1e-2).unwrap();
    }
    for k in 0..2 {
        let gs: Vec<f64> = grads.iter().map(|g| g[k]).collect();
        let want = adamw_oracle([0.5, -2.0][k], &gs, 1e-2, cfg);
        assert!((store.get(id).value.data()[k] - want).abs() < 1e-12);
    }
    assert_eq!(opt.step, 3);
}

#[test]
fn poisoned_gradient_leaves_parameters_untouched() {
    let mut store = ParamStore::<f32>::new();
    let a = store.add("a", Tensor::full(&[3], 1.0));
    let b = store.add("b", Tensor::full(&[3], 1.0));
    let mut opt = AdamW::new(AdamWConfig::default(), &store);
    store.get_mut(a).grad.data_mut()[0] = 0.5;
    store.get_mut(b).grad.data_mut()[1] = f32::NAN;
    let before = store.clone();
    match opt.step(&mut store, 1e-3) {
        Err(Error::PoisonedGradient { name }) => assert_eq!(name, "b"),
        other => panic!("expected poisoned gradient, got {other:?}"),
    }
    for (x, y) in store.iter().zip(before.iter()) {
        assert_eq!(x.value, y.value);
    }
    assert_eq!(opt.step, 0);
}

#[test]
fn clip_grad_norm_rescales() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", t(&[2], &[0.0, 0.0]));
    store.get_mut(id).grad.data_mut().copy_from_slice(&[3.0, 4.0]);
    let n = clip_grad_norm(&mut store, 1.0);
    assert!((n - 5.0).abs() < 1e-12);
    assert_close(store.get(id).grad.data(), &[0.6, 0.8], 1e-12);
}

#[test]
fn cosine_schedule_restarts_each_cycle() {
    let s = LrSchedule::default();
    assert_eq!(s.lr_at(0), 1e-4);
    assert_eq!(s.lr_at(100), 1e-4);
    assert_eq!(s.lr_at(200), 1e-4);
    assert!((s.lr_at(50) - (1e-6 + 0.5 * (1e-4 - 1e-6))).abs() < 1e-18);
    assert!(s.lr_at(99) < 2e-6);
    for e in 0..99 {
        assert!(s.lr_at(e + 1) < s.lr_at(e));
    }
    let lin = LrSchedule {
        shape: ScheduleShape::Linear,
        ..s
    };
    assert!((lin.lr_at(50) - (1e-4 - 0.5 * (1e-4 - 1e-6))).abs() < 1e-18);
}

#[test]
fn container_round_trip_and_layout() {
    let a = Tensor::<f32>::new(vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, 1e-7, 7.0]).unwrap();
    let b = Tensor::<f32>::new(vec![4], vec![9.0, 8.0, 7.0, 6.0]).unwrap();
    let bytes = encode("{\"k\":1}", &[("layer.w", &a), ("layer.b", &b)]).unwrap();
    let text_end = bytes.windows(4).position(|w| w == b"end\n").unwrap() + 4;
    let head = std::str::from_utf8(&bytes[..text_end]).unwrap();
    assert!(head.starts_with("landtime-tensors 1\nmeta {\"k\":1}\ntensor layer.w 2x3 0 24\n"));
    let (meta, entries, start) = read_manifest(&bytes).unwrap();
    assert_eq!(meta, "{\"k\":1}");
    assert_eq!(entries[1].offset, 24);
    assert_eq!(bytes.len(), start + 40);
    let file = decode(&bytes).unwrap();
    assert_eq!(file.tensors[0], ("layer.w".to_string(), a));
    assert_eq!(file.tensors[1].1, b);
    assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode(b"nonsense\n").is_err());
}

proptest! {
    #[test]
    fn softmax_rows_are_stochastic(v in prop::collection::vec(-30.0f64..30.0, 12)) {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[3, 4], &v));
        let s = tape.softmax_rows(x).unwrap();
        for row in tape.value(s).data().chunks(4) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_rows_have_zero_mean_unit_variance(v in prop::collection::vec(-5.0f64..5.0, 16)) {
        prop_assume!(v.chunks(8).all(|r| r.iter().any(|&x| (x - r[0]).abs() > 1e-3)));
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 8], &v));
        let g = tape.constant(Tensor::full(&[8], 1.0));
        let b = tape.constant(Tensor::zeros(&[8]));
        let y = tape.layer_norm(x, g, b, 1e-12).unwrap();
        for row in tape.value(y).data().chunks(8) {
            let mean = row.iter().sum::<f64>() / 8.0;
            let var = row.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 8.0;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn container_round_trips_arbitrary_values(v in prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 1..64)) {
        let x = Tensor::new(vec![v.len()], v.clone()).unwrap();
        let bytes = encode("{}", &[("x", &x)]).unwrap();
        prop_assert_eq!(&decode(&bytes).unwrap().tensors[0].1, &x);
    }
}
