mod common;

use common::rng;
use darqn::numerics::{
    lstm_step, LstmVars, ParameterSet, RmsProp, RmsPropConfig, Tape, Tensor, Var,
};
use proptest::prelude::*;
use rand::Rng;

fn random_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Central-difference check of `Σ c ⊙ build(params)` for every scalar in `params`.
fn check_op(params: &ParameterSet, build: impl Fn(&mut Tape<'_>, &[Var]) -> Var) {
    let eval = |p: &ParameterSet| -> f64 {
        let mut tape = Tape::new(p);
        let vars: Vec<Var> = p.ids().map(|id| tape.param(id)).collect();
        let out = build(&mut tape, &vars);
        let v = tape.value(out);
        v.iter().enumerate().map(|(i, x)| x * coef(i)).sum()
    };
    let mut tape = Tape::new(params);
    let vars: Vec<Var> = params.ids().map(|id| tape.param(id)).collect();
    let out = build(&mut tape, &vars);
    let n = tape.value(out).len();
    let out = tape.reshape(out, &[n]).unwrap();
    let c = tape.input_vec((0..n).map(coef).collect());
    let prod = tape.mul(out, c).unwrap();
    let loss = tape.sum(prod).unwrap();
    let mut grads = params.zeros_like();
    tape.backward(loss, &mut grads).unwrap();

    let h = 1e-6;
    let mut p = params.clone();
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let orig = p.get(id).data()[k];
            p.get_mut(id).data_mut()[k] = orig + h;
            let plus = eval(&p);
            p.get_mut(id).data_mut()[k] = orig - h;
            let minus = eval(&p);
            p.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.get(id).data()[k];
            let err = (analytic - numeric).abs();
            assert!(
                err <= 1e-5 * analytic.abs().max(numeric.abs()) + 1e-8,
                "{}[{k}]: {analytic} vs {numeric}",
                params.name(id)
            );
        }
    }
}

fn coef(i: usize) -> f64 {
    ((i * 37 % 11) as f64 - 4.3) / 4.0
}

fn set(entries: &[(&str, Tensor)]) -> ParameterSet {
    let mut p = ParameterSet::new();
    for (name, t) in entries {
        p.insert(name, t.clone()).unwrap();
    }
    p
}

#[test]
fn conv2d_matches_direct_sum_and_differences() {
    let mut r = rng(1);
    let x = random_tensor(&[2, 7, 7], &mut r);
    let k = random_tensor(&[3, 2, 3, 3], &mut r);
    let b = random_tensor(&[3], &mut r);
    let params = set(&[("x", x.clone()), ("k", k.clone()), ("b", b.clone())]);

    let mut tape = Tape::new(&params);
    let v: Vec<Var> = params.ids().map(|id| tape.param(id)).collect();
    let out = tape.conv2d(v[0], v[1], v[2], 2).unwrap();
    assert_eq!(tape.shape(out), [3, 3, 3]);
    let got = tape.value(out);
    let at = |t: &Tensor, idx: &[usize]| {
        let s = t.shape();
        let mut flat = 0;
        for (d, i) in idx.iter().enumerate() {
            flat = flat * s[d] + i;
        }
        t.data()[flat]
    };
    for o in 0..3 {
        for y in 0..3 {
            for xx in 0..3 {
                let mut want = b.data()[o];
                for c in 0..2 {
                    for i in 0..3 {
                        for j in 0..3 {
                            want += at(&k, &[o, c, i, j]) * at(&x, &[c, 2 * y + i, 2 * xx + j]);
                        }
                    }
                }
                assert!((got[(o * 3 + y) * 3 + xx] - want).abs() <= 1e-12);
            }
        }
    }
    check_op(&params, |t, v| t.conv2d(v[0], v[1], v[2], 2).unwrap());
}

#[test]
fn dense_ops_gradients() {
    let mut r = rng(2);
    let params = set(&[
        ("m", random_tensor(&[4, 3], &mut r)),
        ("w", random_tensor(&[5, 3], &mut r)),
        ("b", random_tensor(&[5], &mut r)),
        ("a", random_tensor(&[4], &mut r)),
    ]);
    check_op(&params, |t, v| {
        t.linear_rows(v[0], v[1], Some(v[2])).unwrap()
    });
    check_op(&params, |t, v| {
        let w = t.softmax(v[3]).unwrap();
        t.weighted_rows(w, v[0]).unwrap()
    });
    check_op(&params, |t, v| t.log_softmax(v[3]).unwrap());
    check_op(&params, |t, v| {
        let x = t.row(v[0], 1).unwrap();
        let y = t.affine(x, v[1], Some(v[2])).unwrap();
        let s = t.sigmoid(y).unwrap();
        let th = t.tanh(y).unwrap();
        let m = t.mul(s, th).unwrap();
        t.square(m).unwrap()
    });
    check_op(&params, |t, v| {
        let mt = t.transpose(v[0]).unwrap();
        let flat = t.reshape(mt, &[12]).unwrap();
        let part = t.slice(flat, 3, 4).unwrap();
        t.sub(part, v[3]).unwrap()
    });
}

#[test]
fn lstm_step_gradients() {
    let mut r = rng(3);
    let (n, h) = (3, 2);
    let params = set(&[
        ("x", random_tensor(&[n], &mut r)),
        ("h", random_tensor(&[h], &mut r)),
        ("c", random_tensor(&[h], &mut r)),
        ("w_ih", random_tensor(&[4 * h, n], &mut r)),
        ("b_ih", random_tensor(&[4 * h], &mut r)),
        ("w_hh", random_tensor(&[4 * h, h], &mut r)),
        ("b_hh", random_tensor(&[4 * h], &mut r)),
    ]);
    check_op(&params, |t, v| {
        let p = LstmVars {
            w_ih: v[3],
            b_ih: v[4],
            w_hh: v[5],
            b_hh: v[6],
        };
        let (h1, c1) = lstm_step(t, v[0], v[1], v[2], p).unwrap();
        let (h2, c2) = lstm_step(t, h1, h1, c1, LstmVars { w_ih: v[5], ..p }).unwrap();
        t.add(h2, c2).unwrap()
    });
}

#[test]
fn rmsprop_matches_hand_trace() {
    let cfg = RmsPropConfig {
        momentum: 0.95,
        decay: 0.95,
        epsilon: 0.01,
    };
    let mut p = set(&[("w", Tensor::from_vec(vec![0.5, -0.25]))]);
    let mut opt = RmsProp::new(cfg, &p).unwrap();
    let (mut w, mut ms, mut vel) = ([0.5, -0.25], [0.0; 2], [0.0; 2]);
    let lr = 0.01;
    for step in 0..5 {
        let g = [0.3 - 0.1 * step as f64, w[1] * 2.0];
        let mut grads = p.zeros_like();
        grads
            .get_mut(p.ids().next().unwrap())
            .data_mut()
            .copy_from_slice(&g);
        opt.step(&mut p, &grads, lr).unwrap();
        for k in 0..2 {
            ms[k] = 0.95 * ms[k] + (1.0 - 0.95) * g[k] * g[k];
            vel[k] = 0.95 * vel[k] + lr * g[k] / (ms[k] + 0.01).sqrt();
            w[k] -= vel[k];
        }
        assert_eq!(p.by_name("w").unwrap().data(), &w);
    }
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-500.0f64..500.0, 1..40)) {
        let p = ParameterSet::new();
        let mut tape = Tape::new(&p);
        let x = tape.input_vec(v.clone());
        let s = tape.softmax(x).unwrap();
        let ls = tape.log_softmax(x).unwrap();
        let total: f64 = tape.value(s).iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for (a, b) in tape.value(s).iter().zip(tape.value(ls)) {
            prop_assert!(*a >= 0.0);
            if *a > 1e-200 {
                prop_assert!((a.ln() - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn relu_gradient_is_the_indicator(v in prop::collection::vec(-3.0f64..3.0, 1..20)) {
        let mut p = ParameterSet::new();
        let id = p.insert("x", Tensor::from_vec(v.clone())).unwrap();
        let mut tape = Tape::new(&p);
        let x = tape.param(id);
        let y = tape.relu(x).unwrap();
        let s = tape.sum(y).unwrap();
        let mut g = p.zeros_like();
        tape.backward(s, &mut g).unwrap();
        for (gi, xi) in g.get(id).data().iter().zip(&v) {
            prop_assert_eq!(*gi, if *xi > 0.0 { 1.0 } else { 0.0 });
        }
    }
}
