use pemo_core::matrix::Matrix;
use pemo_core::permutations::{
    all_permutations, apply, enumerate, enumerate_nested, mask_commutes, mask_matrix, sample, PermutationSpec,
    SetStructure, DEFAULT_ENUMERATION_CAP,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn perm_matrix(map: &[usize]) -> Matrix {
    PermutationSpec::normal(map.to_vec()).unwrap().realize()
}

fn row_times(x: &[f64], p: &Matrix) -> Vec<f64> {
    Matrix::from_vec(1, x.len(), x.to_vec()).unwrap().matmul(p).unwrap().data().to_vec()
}

#[test]
fn normal_identity_realizes_to_identity() {
    assert_eq!(PermutationSpec::identity(3).realize(), Matrix::identity(3));
}

#[test]
fn nested_subset_swap_moves_whole_subsets() {
    let spec = PermutationSpec::nested(vec![2, 2], vec![1, 0], vec![vec![0, 1], vec![0, 1]]).unwrap();
    assert_eq!(row_times(&[1.0, 2.0, 3.0, 4.0], &spec.realize()), vec![3.0, 4.0, 1.0, 2.0]);
}

#[test]
fn nested_inner_swap_stays_in_its_subset() {
    let spec = PermutationSpec::nested(vec![2, 2], vec![0, 1], vec![vec![1, 0], vec![0, 1]]).unwrap();
    assert_eq!(row_times(&[1.0, 2.0, 3.0, 4.0], &spec.realize()), vec![2.0, 1.0, 3.0, 4.0]);
}

#[test]
fn nested_realization_is_kronecker_times_block_diagonal() {
    // Oracle: (Π_sub ⊗ I_{n_s}) · blockdiag(Π_1, …), built entry by entry.
    for spec in enumerate_nested(&SetStructure::nested(3, 2)).unwrap() {
        let PermutationSpec::Nested { sub, within, .. } = &spec else { unreachable!() };
        let n_s = 2;
        let n = 6;
        let ps = perm_matrix(sub);
        let kron = Matrix::from_fn(n, n, |r, c| if r % n_s == c % n_s { ps[(r / n_s, c / n_s)] } else { 0.0 });
        let blocks: Vec<Matrix> = within.iter().map(|w| perm_matrix(w)).collect();
        let bd = Matrix::from_fn(n, n, |r, c| if r / n_s == c / n_s { blocks[r / n_s][(r % n_s, c % n_s)] } else { 0.0 });
        assert_eq!(spec.realize(), kron.matmul(&bd).unwrap(), "{spec:?}");
    }
}

#[test]
fn enumeration_counts() {
    assert_eq!(enumerate_nested(&SetStructure::nested(2, 2)).unwrap().len(), 8);
    assert_eq!(enumerate_nested(&SetStructure::nested(1, 3)).unwrap().len(), 6);
    assert_eq!(enumerate_nested(&SetStructure::nested(3, 1)).unwrap().len(), 6);
    let all = enumerate_nested(&SetStructure::nested(2, 3)).unwrap();
    assert_eq!(all.len(), 72);
    let mut maps: Vec<Vec<usize>> = all.iter().map(|s| s.index_map()).collect();
    maps.sort();
    maps.dedup();
    assert_eq!(maps.len(), 72);
}

#[test]
fn enumeration_cap_reports_required_count() {
    let err = enumerate(&SetStructure::normal(8), DEFAULT_ENUMERATION_CAP).unwrap_err();
    assert!(err.to_string().contains("40320"), "{err}");
    assert!(enumerate_nested(&SetStructure::normal(3)).is_err());
}

#[test]
fn mask_is_block_ones_symmetric_and_hadamard_idempotent() {
    let m = mask_matrix(&SetStructure::nested(2, 3));
    assert_eq!(m, m.transpose());
    assert_eq!(m.hadamard(&m).unwrap(), m);
    assert_eq!(m[(0, 2)], 1.0);
    assert_eq!(m[(2, 3)], 0.0);
}

#[test]
fn mask_commutes_with_every_nested_permutation() {
    for n_sub in 1..=3 {
        for n_s in 1..=3 {
            let st = SetStructure::nested(n_sub, n_s);
            for spec in enumerate_nested(&st).unwrap() {
                assert!(mask_commutes(&st, &spec).unwrap(), "{spec:?}");
            }
        }
    }
}

#[test]
fn some_flat_permutation_breaks_the_mask() {
    let st = SetStructure::nested(2, 2);
    let failing = all_permutations(4)
        .into_iter()
        .filter(|p| !mask_commutes(&st, &PermutationSpec::normal(p.clone()).unwrap()).unwrap())
        .count();
    assert!(failing > 0);
    assert!(mask_commutes(&st, &PermutationSpec::identity(4)).unwrap());
    // (1 3)(2 4) swaps the subsets wholesale and so still commutes.
    assert!(mask_commutes(&st, &PermutationSpec::normal(vec![2, 3, 0, 1]).unwrap()).unwrap());
    assert!(!mask_commutes(&st, &PermutationSpec::normal(vec![0, 2, 1, 3]).unwrap()).unwrap());
    assert!(mask_commutes(&st, &PermutationSpec::identity(3)).is_err());
}

#[test]
fn apply_examples() {
    let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
    assert_eq!(apply(None, &x, None).unwrap(), x);
    let swap = PermutationSpec::normal(vec![1, 0]).unwrap();
    assert_eq!(
        apply(Some(&swap), &x, Some(&swap)).unwrap(),
        Matrix::from_rows(&[&[4.0, 3.0], &[2.0, 1.0]]).unwrap()
    );
    let y = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
    let cycle = PermutationSpec::normal(vec![1, 2, 0]).unwrap();
    assert_eq!(
        apply(None, &y, Some(&cycle)).unwrap(),
        Matrix::from_rows(&[&[3.0, 1.0, 2.0], &[6.0, 4.0, 5.0]]).unwrap()
    );
    assert!(apply(Some(&cycle), &x, None).is_err());
}

#[test]
fn sampling_is_deterministic_and_trivial_on_one_element() {
    assert!(sample(&SetStructure::normal(1), 9).is_identity());
    let st = SetStructure::nested(3, 2);
    assert_eq!(sample(&st, 42), sample(&st, 42));
}

#[test]
fn sampling_is_uniform_over_s3() {
    let n = 10_000;
    let mut counts = std::collections::BTreeMap::new();
    for seed in 0..n {
        *counts.entry(sample(&SetStructure::normal(3), seed).index_map()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 6);
    let p = 1.0 / 6.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for (perm, c) in counts {
        assert!((c as f64 - n as f64 * p).abs() < 5.0 * sigma, "{perm:?} drawn {c} times");
    }
}

#[test]
fn hadamard_interchange_holds_exhaustively_up_to_four() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for r in 1..=4 {
        for c in 1..=4 {
            let mut draw = || {
                let v: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-9..=9) as f64).collect();
                Matrix::from_vec(r, c, v).unwrap()
            };
            let (a, b) = (draw(), draw());
            for p1 in all_permutations(r) {
                let p1 = perm_matrix(&p1);
                for p2 in all_permutations(c) {
                    let p2 = perm_matrix(&p2);
                    let sandwich = |m: &Matrix| p1.matmul(m).unwrap().matmul(&p2).unwrap();
                    let lhs = sandwich(&a.hadamard(&b).unwrap());
                    let rhs = sandwich(&a).hadamard(&sandwich(&b)).unwrap();
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }
}

fn nested_spec() -> impl Strategy<Value = (PermutationSpec, PermutationSpec)> {
    (1usize..4, 1usize..4, any::<u64>(), any::<u64>()).prop_map(|(n_sub, n_s, s1, s2)| {
        let st = SetStructure::nested(n_sub, n_s);
        (sample(&st, s1), sample(&st, s2))
    })
}

proptest! {
    #[test]
    fn realized_nested_is_a_permutation_matrix((a, _) in nested_spec()) {
        let m = a.realize();
        for i in 0..m.rows() {
            let row: f64 = m.row(i).iter().sum();
            let col: f64 = (0..m.rows()).map(|r| m[(r, i)]).sum();
            prop_assert!(row == 1.0 && col == 1.0);
        }
        prop_assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn composition_matches_matrix_product((a, b) in nested_spec()) {
        let ab = a.compose(&b).unwrap();
        let nested = matches!(ab, PermutationSpec::Nested { .. });
        prop_assert!(nested);
        prop_assert_eq!(ab.realize(), a.realize().matmul(&b.realize()).unwrap());
    }

    #[test]
    fn inverse_realizes_to_transpose((a, _) in nested_spec()) {
        prop_assert_eq!(a.inverse().realize(), a.realize().transpose());
        prop_assert!(a.compose(&a.inverse()).unwrap().is_identity());
    }

    #[test]
    fn flat_composition_matches_matrix_product(seed in any::<u64>(), n in 1usize..6) {
        let a = sample(&SetStructure::normal(n), seed);
        let b = sample(&SetStructure::normal(n), seed.wrapping_add(1));
        prop_assert_eq!(a.compose(&b).unwrap().realize(), a.realize().matmul(&b.realize()).unwrap());
    }
}
