use std::rc::Rc;

use pemo_tensor::{
    finite_difference_check, forward_primitive, Graph, Primitive, Result, Tensor, TensorError, Var,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

#[test]
fn primitive_examples() {
    assert_eq!(forward_primitive(Primitive::Tanh, &[Tensor::scalar(0.0)]).unwrap().data(), &[0.0]);
    let x = t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let y = forward_primitive(Primitive::MatMul, &[Tensor::identity(3), x.clone()]).unwrap();
    assert_eq!(y, x);
    let s = forward_primitive(Primitive::Sum, &[Tensor::vector(vec![1.0, 2.0, 3.0])]).unwrap();
    assert_eq!(s.data(), &[6.0]);
}

#[test]
fn primitive_errors() {
    let a = Tensor::zeros(&[2, 3]);
    let b = Tensor::zeros(&[2, 3]);
    match forward_primitive(Primitive::MatMul, &[a.clone(), b]) {
        Err(TensorError::ShapeMismatch { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(forward_primitive(Primitive::Add, &[a, Tensor::zeros(&[3, 2])]).is_err());
    let neg = Tensor::vector(vec![1.0, -1.0]);
    assert!(matches!(
        forward_primitive(Primitive::Sqrt, &[neg.clone()]),
        Err(TensorError::Domain { index: 1, .. })
    ));
    assert!(matches!(forward_primitive(Primitive::Log, &[neg]), Err(TensorError::Domain { .. })));
    assert!(forward_primitive(Primitive::Reciprocal, &[Tensor::vector(vec![0.0])]).is_err());
    assert!(forward_primitive(Primitive::Reshape(vec![4]), &[Tensor::zeros(&[2, 3])]).is_err());
    assert!(forward_primitive(Primitive::Slice { axis: 1, start: 2, len: 2 }, &[Tensor::zeros(&[2, 3])]).is_err());
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::scalar(0.0));
    let y = g.tanh(x);
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0]);

    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![1.0, 2.0]));
    let sq = g.square(x);
    let l = g.sum(sq);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);

    let a0 = t(&[1, 2], &[1.0, 2.0]);
    let b0 = t(&[2, 1], &[3.0, 4.0]);
    let mut g = Graph::new();
    let a = g.param(&a0);
    let b = g.constant(b0.clone());
    let p = g.matmul(a, b).unwrap();
    let l = g.sum(p);
    g.backward(l).unwrap();
    // Independent oracle: central differences with step 1e-6.
    let f = |a: &[f64]| a[0] * 3.0 + a[1] * 4.0;
    for i in 0..2 {
        let mut plus = a0.data().to_vec();
        let mut minus = a0.data().to_vec();
        plus[i] += 1e-6;
        minus[i] -= 1e-6;
        let fd = (f(&plus) - f(&minus)) / 2e-6;
        assert!((g.grad(a).unwrap()[i] - fd).abs() < 1e-8);
    }
    assert_eq!(g.grad(a).unwrap(), &[3.0, 4.0]);
}

#[test]
fn non_scalar_loss_rejected() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::zeros(&[2]));
    assert_eq!(g.backward(x), Err(TensorError::NonScalarLoss(vec![2])));
}

#[test]
fn gradcheck_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[5], -2.0, 2.0);
    let err = finite_difference_check(
        |g, x| {
            let y = g.tanh(x);
            Ok(g.sum(y))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
    let err = finite_difference_check(|g, _| Ok(g.constant(Tensor::scalar(3.0))), &x, 1e-5).unwrap();
    assert_eq!(err, 0.0);
}

// Each case builds a scalar function of one input through the listed
// primitive, weighted by fixed coefficients so that every coordinate has a
// distinct, nonzero gradient.
type Case = (&'static str, Vec<usize>, f64, f64, fn(&mut Graph, Var) -> Result<Var>);

fn weighted_sum(g: &mut Graph, y: Var) -> Result<Var> {
    let n = g.value(y).numel();
    let w = Tensor::new(g.shape(y).to_vec(), (0..n).map(|i| 0.5 + 0.37 * i as f64).collect())?;
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn cases() -> Vec<Case> {
    vec![
        ("matmul_lhs", vec![3, 4], -1.0, 1.0, |g, x| {
            let b = g.constant(Tensor::new(vec![4, 2], (0..8).map(|i| (i as f64 * 0.7).sin()).collect())?);
            let y = g.matmul(x, b)?;
            weighted_sum(g, y)
        }),
        ("matmul_rhs", vec![4, 2], -1.0, 1.0, |g, x| {
            let a = g.constant(Tensor::new(vec![3, 4], (0..12).map(|i| (i as f64 * 0.3).cos()).collect())?);
            let y = g.matmul(a, x)?;
            weighted_sum(g, y)
        }),
        ("matmul_batched", vec![2, 3, 3], -1.0, 1.0, |g, x| {
            let xt = g.transpose(x)?;
            let y = g.matmul(x, xt)?;
            weighted_sum(g, y)
        }),
        ("matmul_shared_rhs", vec![3, 3], -1.0, 1.0, |g, x| {
            let a = g.constant(Tensor::new(vec![2, 2, 3], (0..12).map(|i| (i as f64 * 0.9).sin()).collect())?);
            let y = g.matmul(a, x)?;
            weighted_sum(g, y)
        }),
        ("add_sub_mul", vec![6], 0.5, 2.0, |g, x| {
            let s = g.square(x);
            let a = g.add(x, s)?;
            let b = g.sub(a, x)?;
            let c = g.mul(b, x)?;
            weighted_sum(g, c)
        }),
        ("tanh", vec![6], -2.0, 2.0, |g, x| {
            let y = g.tanh(x);
            weighted_sum(g, y)
        }),
        ("scale_shift", vec![4], -1.0, 1.0, |g, x| {
            let y = g.scale(x, -2.5);
            let y = g.shift(y, 0.3);
            let y = g.square(y);
            weighted_sum(g, y)
        }),
        ("sum_axis", vec![2, 3, 2], -1.0, 1.0, |g, x| {
            let y = g.sum_axis(x, 1)?;
            let y = g.square(y);
            weighted_sum(g, y)
        }),
        ("reshape", vec![2, 3], -1.0, 1.0, |g, x| {
            let y = g.reshape(x, &[3, 2])?;
            let y = g.tanh(y);
            weighted_sum(g, y)
        }),
        ("concat_slice", vec![2, 3], -1.0, 1.0, |g, x| {
            let s = g.slice(x, 1, 1, 2)?;
            let sq = g.square(s);
            let y = g.concat(&[x, sq], 1)?;
            weighted_sum(g, y)
        }),
        ("sqrt", vec![5], 0.2, 3.0, |g, x| {
            let y = g.sqrt(x)?;
            weighted_sum(g, y)
        }),
        ("reciprocal", vec![5], 0.5, 3.0, |g, x| {
            let y = g.reciprocal(x)?;
            weighted_sum(g, y)
        }),
        ("log", vec![5], 0.2, 3.0, |g, x| {
            let y = g.log(x)?;
            weighted_sum(g, y)
        }),
        ("softplus", vec![5], -3.0, 3.0, |g, x| {
            let y = g.softplus(x);
            weighted_sum(g, y)
        }),
        ("gather", vec![4], -1.0, 1.0, |g, x| {
            let idx: Rc<[usize]> = vec![3, 0, 0, 2, 1, 3].into();
            let y = g.gather(x, idx, &[2, 3])?;
            let y = g.tanh(y);
            weighted_sum(g, y)
        }),
    ]
}

#[test]
fn every_primitive_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (name, shape, lo, hi, f) in cases() {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = random(&mut rng, &shape, lo, hi);
            worst = worst.max(finite_difference_check(f, &x, 1e-5).unwrap());
        }
        assert!(worst < 1e-6, "{name}: relative error {worst}");
    }
}

fn build(seed: u64) -> (Vec<u64>, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, &[4, 4], -1.0, 1.0).into_param();
    let x = random(&mut rng, &[3, 4], -1.0, 1.0);
    let mut g = Graph::new();
    let wv = g.param(&w);
    let xv = g.constant(x);
    let h = g.matmul(xv, wv).unwrap();
    let h = g.tanh(h);
    let l = g.sum(h);
    g.backward(l).unwrap();
    (
        g.data(h).iter().map(|x| x.to_bits()).collect(),
        g.grad(wv).unwrap().iter().map(|x| x.to_bits()).collect(),
    )
}

#[test]
fn identical_sequences_are_bit_identical() {
    assert_eq!(build(9), build(9));
    assert_ne!(build(9), build(10));
}

#[test]
fn second_graph_leaves_first_untouched() {
    let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap().into_param();
    let mut g1 = Graph::new();
    let a = g1.param(&w);
    let s = g1.square(a);
    let l1 = g1.sum(s);
    g1.backward(l1).unwrap();
    let before_val = g1.data(a).to_vec();
    let before_grad = g1.grad(a).unwrap().to_vec();

    let mut g2 = Graph::new();
    let b = g2.param(&w);
    let c = g2.scale(b, 7.0);
    let l2 = g2.sum(c);
    g2.backward(l2).unwrap();

    assert_eq!(g1.data(a), before_val.as_slice());
    assert_eq!(g1.grad(a).unwrap(), before_grad.as_slice());
    assert_eq!(w.data(), &[1.0, 2.0, 3.0, 4.0]);
    assert!(w.grad().is_none());
}

#[test]
fn accumulate_into_param_tensor() {
    let mut w = Tensor::vector(vec![1.0, -1.0]).into_param();
    for _ in 0..2 {
        let mut g = Graph::new();
        let v = g.param(&w);
        let sq = g.square(v);
        let l = g.sum(sq);
        g.backward(l).unwrap();
        g.accumulate_into(v, &mut w).unwrap();
    }
    assert_eq!(w.grad().unwrap(), &[4.0, -4.0]);
}

proptest! {
    #[test]
    fn matmul_identity_and_transpose(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[rows, cols], -5.0, 5.0);
        let y = forward_primitive(Primitive::MatMul, &[Tensor::identity(rows), x.clone()]).unwrap();
        prop_assert_eq!(y.data(), x.data());
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let tv = g.transpose(v).unwrap();
        let back = g.transpose(tv).unwrap();
        prop_assert_eq!(g.data(back), x.data());
        prop_assert_eq!(g.value(tv).at(&[cols - 1, 0]), x.at(&[0, cols - 1]));
    }

    #[test]
    fn concat_then_slice_recovers_parts(a_len in 1usize..4, b_len in 1usize..4, rows in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[rows, a_len], -1.0, 1.0);
        let b = random(&mut rng, &[rows, b_len], -1.0, 1.0);
        let mut g = Graph::new();
        let av = g.constant(a.clone());
        let bv = g.constant(b.clone());
        let c = g.concat(&[av, bv], 1).unwrap();
        let sa = g.slice(c, 1, 0, a_len).unwrap();
        let sb = g.slice(c, 1, a_len, b_len).unwrap();
        prop_assert_eq!(g.data(sa), a.data());
        prop_assert_eq!(g.data(sb), b.data());
    }
}
