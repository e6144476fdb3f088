use pemo_core::matrix::Matrix;
use pemo_core::pe_modules::{
    att_forward, diag_output, ffn_forward, natt_forward, power_normalize, shared_matvec, Activation, AttParams,
    FfnParams, NattParams, PowerGrouping, SharedWeight, TokenBatch, TokenLayout, Weight,
};
use pemo_core::permutations::{all_permutations, apply, PermutationSpec};
use pemo_tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Weight {
    Weight::Dense(Tensor::new(vec![rows, cols], data).unwrap())
}

fn eye(n: usize) -> Weight {
    dense(n, n, Matrix::identity(n).data().to_vec())
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn shared(rng: &mut ChaCha8Rng, j: usize, n_block: usize) -> SharedWeight {
    let u1 = Tensor::new(vec![j, j], random(rng, j * j)).unwrap();
    let u2 = Tensor::new(vec![j, j], random(rng, j * j)).unwrap();
    SharedWeight::new(u1, u2, n_block).unwrap()
}

/// Storage-order width vectors of every token in group 0.
fn storage_tokens(b: &TokenBatch) -> Vec<Vec<f64>> {
    let w = b.width();
    let t = b.layout.n_tokens();
    (0..t).map(|k| b.data.data()[k * w..(k + 1) * w].to_vec()).collect()
}

fn matvec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `c_k = Σ_{i in scope(k)} (d_k^T K d_i) V d_i`, written as the double sum.
fn naive_attention(d: &[Vec<f64>], k: &Matrix, v: &Matrix, scope: impl Fn(usize, usize) -> bool) -> Vec<Vec<f64>> {
    d.iter()
        .enumerate()
        .map(|(a, dk)| {
            let mut c = vec![0.0; dk.len()];
            for (i, di) in d.iter().enumerate() {
                if !scope(a, i) {
                    continue;
                }
                let score = dot(dk, &matvec(k, di));
                for (ci, vi) in c.iter_mut().zip(matvec(v, di)) {
                    *ci += score * vi;
                }
            }
            c
        })
        .collect()
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn realized(w: &Weight) -> Matrix {
    match w {
        Weight::Dense(t) => Matrix::from_vec(t.shape()[0], t.shape()[1], t.data().to_vec()).unwrap(),
        Weight::Shared(s) => s.realize(),
    }
}

#[test]
fn single_token_attention_by_hand() {
    let b = TokenBatch::new(TokenLayout::Flat { n_tokens: 1 }, 1, 1, 2, vec![1.0, 0.0]).unwrap();
    let c = att_forward(&b, &AttParams { key: eye(2), value: eye(2) }).unwrap();
    assert_eq!(c.data.data(), &[1.0, 0.0]);
}

#[test]
fn orthogonal_tokens_attend_only_to_themselves() {
    let b = TokenBatch::new(TokenLayout::Flat { n_tokens: 2 }, 1, 1, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let c = att_forward(&b, &AttParams { key: eye(2), value: eye(2) }).unwrap();
    assert_eq!(c.data.data(), &[1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn attention_rejects_mismatched_width() {
    let b = TokenBatch::new(TokenLayout::Flat { n_tokens: 2 }, 1, 1, 2, vec![1.0; 4]).unwrap();
    assert!(att_forward(&b, &AttParams { key: eye(3), value: eye(3) }).is_err());
}

#[test]
fn feed_forward_cancelling_context_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, 3 * 4);
    let b = TokenBatch::new(TokenLayout::Flat { n_tokens: 3 }, 1, 2, 2, x.clone()).unwrap();
    let neg = TokenBatch::new(TokenLayout::Flat { n_tokens: 3 }, 1, 2, 2, x.iter().map(|v| -v).collect()).unwrap();
    let w = dense(4, 4, random(&mut rng, 16));
    let y = ffn_forward(&b, &neg, &FfnParams { weight: w }, Activation::Tanh).unwrap();
    assert!(y.data.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_feed_forward_without_context_is_a_no_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&mut rng, 3 * 4);
    let b = TokenBatch::new(TokenLayout::Flat { n_tokens: 3 }, 1, 2, 2, x.clone()).unwrap();
    let zero = TokenBatch::new(TokenLayout::Flat { n_tokens: 3 }, 1, 2, 2, vec![0.0; 12]).unwrap();
    let y = ffn_forward(&b, &zero, &FfnParams { weight: eye(4) }, Activation::Identity).unwrap();
    assert_eq!(y.data.data(), x.as_slice());
    let short = TokenBatch::new(TokenLayout::Flat { n_tokens: 2 }, 1, 2, 2, vec![0.0; 8]).unwrap();
    assert!(ffn_forward(&b, &short, &FfnParams { weight: eye(4) }, Activation::Identity).is_err());
}

#[test]
fn attention_is_token_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (t, w) = (5, 4);
    let x = random(&mut rng, t * w);
    let params = AttParams {
        key: dense(w, w, random(&mut rng, w * w)),
        value: dense(w, w, random(&mut rng, w * w)),
    };
    let b = TokenBatch::new(TokenLayout::Flat { n_tokens: t }, 1, 1, w, x.clone()).unwrap();
    let c = storage_tokens(&att_forward(&b, &params).unwrap());
    for _ in 0..50 {
        let mut pi: Vec<usize> = (0..t).collect();
        for i in (1..t).rev() {
            pi.swap(i, rng.gen_range(0..=i));
        }
        let px: Vec<f64> = pi.iter().flat_map(|&s| x[s * w..(s + 1) * w].to_vec()).collect();
        let pb = TokenBatch::new(TokenLayout::Flat { n_tokens: t }, 1, 1, w, px).unwrap();
        let pc = storage_tokens(&att_forward(&pb, &params).unwrap());
        let expect: Vec<Vec<f64>> = pi.iter().map(|&s| c[s].clone()).collect();
        assert!(max_diff(&pc, &expect) < 1e-12);
    }
}

#[test]
fn shared_matvec_examples() {
    let one = |v: f64| Tensor::new(vec![1, 1], vec![v]).unwrap();
    let w = SharedWeight::new(one(2.0), one(1.0), 2).unwrap();
    assert_eq!(shared_matvec(&w, &[3.0, 5.0]).unwrap(), vec![11.0, 13.0]);
    let diag = SharedWeight::new(one(2.0), one(0.0), 3).unwrap();
    assert_eq!(shared_matvec(&diag, &[1.0, 2.0, 3.0]).unwrap(), vec![2.0, 4.0, 6.0]);
    let flat = SharedWeight::new(one(2.0), one(2.0), 3).unwrap();
    assert_eq!(shared_matvec(&flat, &[1.0, 2.0, 3.0]).unwrap(), vec![12.0, 12.0, 12.0]);
    assert!(shared_matvec(&w, &[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn shared_weight_count_ignores_block_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let counts: Vec<usize> = [1, 2, 5, 16].iter().map(|&n| shared(&mut rng, 3, n).param_count()).collect();
    assert!(counts.iter().all(|&c| c == 18));
}

#[test]
fn nested_attention_without_local_branch_is_plain_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = 3;
    let layout = TokenLayout::Nested { n_sub: 2, n_s: 3 };
    let b = TokenBatch::new(layout, 1, 1, w, random(&mut rng, 6 * w)).unwrap();
    let gk = dense(w, w, random(&mut rng, w * w));
    let gv = dense(w, w, random(&mut rng, w * w));
    let p = NattParams {
        local_key: dense(w, w, vec![0.0; w * w]),
        local_value: dense(w, w, vec![0.0; w * w]),
        global_key: gk.clone(),
        global_value: gv.clone(),
    };
    let flat = TokenBatch::new(TokenLayout::Flat { n_tokens: 6 }, 1, 1, w, b.data.data().to_vec()).unwrap();
    let a = att_forward(&flat, &AttParams { key: gk, value: gv }).unwrap();
    assert!(max_diff(&storage_tokens(&natt_forward(&b, &p).unwrap()), &storage_tokens(&a)) < 1e-12);
    assert!(natt_forward(&flat, &p).is_err());
}

#[test]
fn nested_attention_with_one_subset_sums_both_branches_over_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = 2;
    let b = TokenBatch::new(TokenLayout::Nested { n_sub: 1, n_s: 4 }, 1, 1, w, random(&mut rng, 4 * w)).unwrap();
    let ws: Vec<Weight> = (0..4).map(|_| dense(w, w, random(&mut rng, w * w))).collect();
    let p = NattParams {
        local_key: ws[0].clone(),
        local_value: ws[1].clone(),
        global_key: ws[2].clone(),
        global_value: ws[3].clone(),
    };
    let d = storage_tokens(&b);
    let local = naive_attention(&d, &realized(&ws[0]), &realized(&ws[1]), |_, _| true);
    let global = naive_attention(&d, &realized(&ws[2]), &realized(&ws[3]), |_, _| true);
    let expect: Vec<Vec<f64>> = local.iter().zip(&global).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
    assert!(max_diff(&storage_tokens(&natt_forward(&b, &p).unwrap()), &expect) < 1e-12);
}

#[test]
fn diag_output_examples() {
    let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
    assert_eq!(diag_output(&x, &[1, 1], &[1, 1]).unwrap(), Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 4.0]]).unwrap());
    let d = Matrix::from_rows(&[&[5.0, 0.0], &[0.0, 6.0]]).unwrap();
    assert_eq!(diag_output(&d, &[1, 1], &[1, 1]).unwrap(), d);
    let wide = Matrix::from_fn(4, 2, |r, c| (r * 2 + c) as f64 + 1.0);
    let blocks = diag_output(&wide, &[2, 2], &[1, 1]).unwrap();
    assert_eq!(blocks, Matrix::from_rows(&[&[1.0, 0.0], &[3.0, 0.0], &[0.0, 6.0], &[0.0, 8.0]]).unwrap());
    assert!(diag_output(&x, &[1], &[1, 1]).is_err());
    assert!(diag_output(&x, &[1, 2], &[1, 1]).is_err());
}

#[test]
fn diag_output_is_joint_but_not_independent() {
    let x = Matrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64 + 1.0);
    let f = |m: &Matrix| diag_output(m, &[1, 1, 1], &[1, 1, 1]).unwrap();
    let mut violations = 0;
    for a in all_permutations(3) {
        let pa = PermutationSpec::normal(a).unwrap();
        for b in all_permutations(3) {
            let pb = PermutationSpec::normal(b).unwrap();
            let lhs = f(&apply(Some(&pa), &x, Some(&pb)).unwrap());
            let rhs = apply(Some(&pa), &f(&x), Some(&pb)).unwrap();
            if pa == pb {
                assert_eq!(lhs, rhs);
            } else if lhs != rhs {
                violations += 1;
            }
        }
    }
    assert!(violations > 0);
}

#[test]
fn power_normalize_examples() {
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
    assert!(close(&power_normalize(&[3.0, 4.0], 1.0, PowerGrouping::Global).unwrap(), &[0.6, 0.8]));
    let v = [0.6, 0.8];
    assert!(close(&power_normalize(&v, 1.0, PowerGrouping::Global).unwrap(), &v));
    let per = power_normalize(&[1.0, 1.0, 0.0, 3.0], 2.0, PowerGrouping::PerBs(2)).unwrap();
    let p0: f64 = per[..2].iter().map(|x| x * x).sum();
    let p1: f64 = per[2..].iter().map(|x| x * x).sum();
    assert!((p0 - 2.0).abs() < 1e-12 && (p1 - 2.0).abs() < 1e-12);
    assert!(power_normalize(&[0.0, 0.0, 1.0, 1.0], 1.0, PowerGrouping::PerBs(2)).is_err());
    assert!(power_normalize(&[1.0], 0.0, PowerGrouping::Global).is_err());
}

proptest! {
    #[test]
    fn shared_matvec_matches_dense_realization(seed in any::<u64>(), j in 1usize..4, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = shared(&mut rng, j, n);
        let d = random(&mut rng, j * n);
        let fast = shared_matvec(&w, &d).unwrap();
        let slow = matvec(&w.realize(), &d);
        prop_assert!(fast.iter().zip(&slow).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn shared_realization_commutes_with_block_permutations(seed in any::<u64>(), j in 1usize..4, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = shared(&mut rng, j, n).realize();
        let mut pi: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            pi.swap(i, rng.gen_range(0..=i));
        }
        let p = Matrix::from_fn(n * j, n * j, |r, c| if r % j == c % j && pi[r / j] == c / j { 1.0 } else { 0.0 });
        prop_assert_eq!(p.matmul(&w).unwrap(), w.matmul(&p).unwrap());
    }

    #[test]
    fn shared_attention_matches_double_sum(seed in any::<u64>(), t in 1usize..5, n in 1usize..4, j in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = TokenBatch::new(TokenLayout::Flat { n_tokens: t }, 1, n, j, random(&mut rng, t * n * j)).unwrap();
        let k = Weight::Shared(shared(&mut rng, j, n));
        let v = Weight::Shared(shared(&mut rng, j, n));
        let expect = naive_attention(&storage_tokens(&b), &realized(&k), &realized(&v), |_, _| true);
        let got = storage_tokens(&att_forward(&b, &AttParams { key: k, value: v }).unwrap());
        prop_assert!(max_diff(&got, &expect) < 1e-10);
    }

    #[test]
    fn nested_attention_matches_masked_double_sum(seed in any::<u64>(), n_sub in 1usize..4, n_s in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = 3;
        let layout = TokenLayout::Nested { n_sub, n_s };
        let b = TokenBatch::new(layout, 1, 1, w, random(&mut rng, n_sub * n_s * w)).unwrap();
        let ws: Vec<Weight> = (0..4).map(|_| dense(w, w, random(&mut rng, w * w))).collect();
        let d = storage_tokens(&b);
        let local = naive_attention(&d, &realized(&ws[0]), &realized(&ws[1]), |a, i| a / n_s == i / n_s);
        let global = naive_attention(&d, &realized(&ws[2]), &realized(&ws[3]), |_, _| true);
        let expect: Vec<Vec<f64>> = local.iter().zip(&global).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        let p = NattParams {
            local_key: ws[0].clone(),
            local_value: ws[1].clone(),
            global_key: ws[2].clone(),
            global_value: ws[3].clone(),
        };
        prop_assert!(max_diff(&storage_tokens(&natt_forward(&b, &p).unwrap()), &expect) < 1e-10);
    }
}
