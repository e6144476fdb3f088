//! Normal and nested permutations, their matrix realizations, and the
//! block mask of a nested set.
//!
//! Convention: a permutation map `p` sends the element at position `i` to
//! position `p[i]`. Its matrix `Π` has `Π[i][p[i]] = 1`, so right
//! multiplication `X Π` moves column `i` of `X` to column `p[i]`, and
//! `Π^T X` moves row `i` to row `p[i]`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, CoreError, Result};
use crate::matrix::Matrix;

pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetStructure {
    Normal(usize),
    /// Subset sizes in order. Subsets may only trade places with subsets of
    /// the same size.
    Nested(Vec<usize>),
}

impl SetStructure {
    pub fn normal(n: usize) -> Self {
        SetStructure::Normal(n)
    }

    pub fn nested(n_sub: usize, n_s: usize) -> Self {
        SetStructure::Nested(vec![n_s; n_sub])
    }

    pub fn nested_sizes(sizes: Vec<usize>) -> Self {
        SetStructure::Nested(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SetStructure::Normal(n) if *n >= 1 => Ok(()),
            SetStructure::Nested(s) if !s.is_empty() && s.iter().all(|&x| x >= 1) => Ok(()),
            _ => invalid(format!("set structure {self:?} needs at least one element per level")),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SetStructure::Normal(n) => *n,
            SetStructure::Nested(s) => s.iter().sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Subset sizes; a normal set is a single subset.
    pub fn subset_sizes(&self) -> Vec<usize> {
        match self {
            SetStructure::Normal(n) => vec![*n],
            SetStructure::Nested(s) => s.clone(),
        }
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.subset_sizes()
            .iter()
            .map(|s| {
                let o = acc;
                acc += s;
                o
            })
            .collect()
    }

    /// Size of the permutation group of the structure.
    pub fn group_order(&self) -> u128 {
        match self {
            SetStructure::Normal(n) => factorial(*n),
            SetStructure::Nested(s) => {
                let within: u128 = s.iter().map(|&x| factorial(x)).product();
                let mut counts = std::collections::BTreeMap::new();
                for &x in s {
                    *counts.entry(x).or_insert(0usize) += 1;
                }
                let across: u128 = counts.values().map(|&c| factorial(c)).product();
                within.saturating_mul(across)
            }
        }
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |a, b| a.saturating_mul(b))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationSpec {
    Normal(Vec<usize>),
    Nested {
        sizes: Vec<usize>,
        sub: Vec<usize>,
        within: Vec<Vec<usize>>,
    },
}

fn is_bijection(map: &[usize]) -> bool {
    let mut seen = vec![false; map.len()];
    for &m in map {
        if m >= map.len() || seen[m] {
            return false;
        }
        seen[m] = true;
    }
    true
}

impl PermutationSpec {
    pub fn normal(map: Vec<usize>) -> Result<Self> {
        if map.is_empty() || !is_bijection(&map) {
            return invalid(format!("{map:?} is not a permutation"));
        }
        Ok(PermutationSpec::Normal(map))
    }

    pub fn identity(n: usize) -> Self {
        PermutationSpec::Normal((0..n).collect())
    }

    /// `within[s]` permutes the elements of the subset that lands at
    /// position `s` after the subset move.
    pub fn nested(sizes: Vec<usize>, sub: Vec<usize>, within: Vec<Vec<usize>>) -> Result<Self> {
        SetStructure::Nested(sizes.clone()).validate()?;
        if sub.len() != sizes.len() || !is_bijection(&sub) {
            return invalid(format!("{sub:?} is not a permutation of {} subsets", sizes.len()));
        }
        for (s, &t) in sub.iter().enumerate() {
            if sizes[s] != sizes[t] {
                return invalid(format!("subset {s} of size {} cannot move to a subset of size {}", sizes[s], sizes[t]));
            }
        }
        if within.len() != sizes.len() {
            return invalid("one within-subset map is needed per subset");
        }
        for (w, &n) in within.iter().zip(&sizes) {
            if w.len() != n || !is_bijection(w) {
                return invalid(format!("{w:?} is not a permutation of {n} elements"));
            }
        }
        Ok(PermutationSpec::Nested { sizes, sub, within })
    }

    pub fn structure(&self) -> SetStructure {
        match self {
            PermutationSpec::Normal(m) => SetStructure::Normal(m.len()),
            PermutationSpec::Nested { sizes, .. } => SetStructure::Nested(sizes.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.structure().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat map: element at position `i` goes to `map[i]`.
    pub fn index_map(&self) -> Vec<usize> {
        match self {
            PermutationSpec::Normal(m) => m.clone(),
            PermutationSpec::Nested { sizes, sub, within } => {
                let st = SetStructure::Nested(sizes.clone());
                let offs = st.offsets();
                let mut out = vec![0; st.len()];
                for s in 0..sizes.len() {
                    let t = sub[s];
                    for e in 0..sizes[s] {
                        out[offs[s] + e] = offs[t] + within[t][e];
                    }
                }
                out
            }
        }
    }

    /// Position `j` of the output takes element `source[j]` of the input.
    pub fn source_map(&self) -> Vec<usize> {
        invert(&self.index_map())
    }

    pub fn is_identity(&self) -> bool {
        self.index_map().iter().enumerate().all(|(i, &m)| i == m)
    }

    /// Matrix realization. For nested specs this is
    /// `(Π_sub ⊗ I_{n_s}) · blockdiag(Π_1, …, Π_{n_sub})`, computed by
    /// explicit products.
    pub fn realize(&self) -> Matrix {
        match self {
            PermutationSpec::Normal(m) => perm_matrix(m),
            PermutationSpec::Nested { sizes, sub, within } => {
                let n: usize = sizes.iter().sum();
                let offs = SetStructure::Nested(sizes.clone()).offsets();
                // Subset move: block (s, sub[s]) is an identity of the subset size.
                let mut outer = Matrix::zeros(n, n);
                for s in 0..sizes.len() {
                    for e in 0..sizes[s] {
                        outer[(offs[s] + e, offs[sub[s]] + e)] = 1.0;
                    }
                }
                let mut inner = Matrix::zeros(n, n);
                for (t, w) in within.iter().enumerate() {
                    for (e, &d) in w.iter().enumerate() {
                        inner[(offs[t] + e, offs[t] + d)] = 1.0;
                    }
                }
                outer.matmul(&inner).expect("square factors of equal size")
            }
        }
    }

    /// The permutation that applies `self` first, then `then`. Its matrix
    /// is `realize(self) · realize(then)`.
    pub fn compose(&self, then: &PermutationSpec) -> Result<PermutationSpec> {
        if self.len() != then.len() {
            return dim_err(format!("compose permutations of {} and {} elements", self.len(), then.len()));
        }
        let a = self.index_map();
        let b = then.index_map();
        let map: Vec<usize> = a.iter().map(|&i| b[i]).collect();
        match (self, then) {
            (PermutationSpec::Nested { sizes, .. }, PermutationSpec::Nested { sizes: s2, .. }) if sizes == s2 => {
                Self::from_nested_map(sizes, &map)
            }
            _ => PermutationSpec::normal(map),
        }
    }

    pub fn inverse(&self) -> PermutationSpec {
        let inv = invert(&self.index_map());
        match self {
            PermutationSpec::Nested { sizes, .. } => {
                Self::from_nested_map(sizes, &inv).expect("inverse of a nested permutation is nested")
            }
            _ => PermutationSpec::Normal(inv),
        }
    }

    /// Factors a flat map into nested form, failing when it mixes subsets.
    pub fn from_nested_map(sizes: &[usize], map: &[usize]) -> Result<PermutationSpec> {
        let st = SetStructure::Nested(sizes.to_vec());
        if map.len() != st.len() || !is_bijection(map) {
            return invalid("map is not a permutation of the nested set");
        }
        let offs = st.offsets();
        let subset_of = |pos: usize| offs.iter().rposition(|&o| o <= pos).expect("offset 0 exists");
        let mut sub = vec![0; sizes.len()];
        let mut within = vec![Vec::new(); sizes.len()];
        for s in 0..sizes.len() {
            let t = subset_of(map[offs[s]]);
            if sizes[t] != sizes[s] {
                return invalid("map moves a subset onto one of different size");
            }
            sub[s] = t;
            let mut w = vec![0; sizes[s]];
            for e in 0..sizes[s] {
                let dest = map[offs[s] + e];
                if subset_of(dest) != t {
                    return invalid("map splits a subset");
                }
                w[e] = dest - offs[t];
            }
            within[t] = w;
        }
        Self::nested(sizes.to_vec(), sub, within)
    }
}

pub(crate) fn invert(map: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; map.len()];
    for (i, &m) in map.iter().enumerate() {
        inv[m] = i;
    }
    inv
}

fn perm_matrix(map: &[usize]) -> Matrix {
    let mut m = Matrix::zeros(map.len(), map.len());
    for (i, &j) in map.iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m
}

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot has a successor");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Every permutation of a structure, up to `cap` of them.
pub fn enumerate(structure: &SetStructure, cap: usize) -> Result<Vec<PermutationSpec>> {
    structure.validate()?;
    let required = structure.group_order();
    if required > cap as u128 {
        return Err(CoreError::CapExceeded { required, cap });
    }
    match structure {
        SetStructure::Normal(n) => Ok(all_permutations(*n).into_iter().map(PermutationSpec::Normal).collect()),
        SetStructure::Nested(sizes) => {
            let subs: Vec<Vec<usize>> = all_permutations(sizes.len())
                .into_iter()
                .filter(|p| p.iter().enumerate().all(|(s, &t)| sizes[s] == sizes[t]))
                .collect();
            let per_subset: Vec<Vec<Vec<usize>>> = sizes.iter().map(|&n| all_permutations(n)).collect();
            let mut out = Vec::with_capacity(required as usize);
            for sub in &subs {
                let mut idx = vec![0usize; sizes.len()];
                loop {
                    let within = idx.iter().zip(&per_subset).map(|(&i, p)| p[i].clone()).collect();
                    out.push(PermutationSpec::Nested {
                        sizes: sizes.clone(),
                        sub: sub.clone(),
                        within,
                    });
                    // Odometer over the within-subset choices.
                    let mut k = 0;
                    loop {
                        if k == idx.len() {
                            break;
                        }
                        idx[k] += 1;
                        if idx[k] < per_subset[k].len() {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                    if k == idx.len() {
                        break;
                    }
                }
            }
            Ok(out)
        }
    }
}

pub fn enumerate_nested(structure: &SetStructure) -> Result<Vec<PermutationSpec>> {
    match structure {
        SetStructure::Nested(_) => enumerate(structure, DEFAULT_ENUMERATION_CAP),
        _ => invalid("enumerate_nested needs a nested structure"),
    }
}

/// Uniform sample from the structure's permutation group.
pub fn sample(structure: &SetStructure, seed: u64) -> PermutationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(structure, &mut rng)
}

pub fn sample_with<R: rand::Rng + ?Sized>(structure: &SetStructure, rng: &mut R) -> PermutationSpec {
    let shuffled = |n: usize, rng: &mut R| {
        let mut v: Vec<usize> = (0..n).collect();
        v.shuffle(rng);
        v
    };
    match structure {
        SetStructure::Normal(n) => PermutationSpec::Normal(shuffled(*n, rng)),
        SetStructure::Nested(sizes) => {
            // Shuffle subsets within each group of equal size.
            let mut sub = vec![0; sizes.len()];
            let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (s, &n) in sizes.iter().enumerate() {
                groups.entry(n).or_default().push(s);
            }
            for members in groups.values() {
                let p = shuffled(members.len(), rng);
                for (i, &s) in members.iter().enumerate() {
                    sub[s] = members[p[i]];
                }
            }
            let within = sizes.iter().map(|&n| shuffled(n, rng)).collect();
            PermutationSpec::Nested {
                sizes: sizes.clone(),
                sub,
                within,
            }
        }
    }
}

/// `blockdiag(1_{n_s}, …)`: ones where row and column fall in the same subset.
pub fn mask_matrix(structure: &SetStructure) -> Matrix {
    let sizes = structure.subset_sizes();
    let n: usize = sizes.iter().sum();
    let mut owner = Vec::with_capacity(n);
    for (s, &k) in sizes.iter().enumerate() {
        owner.extend(std::iter::repeat(s).take(k));
    }
    Matrix::from_fn(n, n, |r, c| if owner[r] == owner[c] { 1.0 } else { 0.0 })
}

/// Whether `M Π == Π M` holds exactly for the structure's mask.
pub fn mask_commutes(structure: &SetStructure, spec: &PermutationSpec) -> Result<bool> {
    if structure.len() != spec.len() {
        return dim_err(format!(
            "structure of {} elements against a permutation of {}",
            structure.len(),
            spec.len()
        ));
    }
    let m = mask_matrix(structure);
    let p = spec.realize();
    Ok(m.matmul(&p)? == p.matmul(&m)?)
}

/// `Π_A^T X Π_B`, with absent specs acting as the identity.
pub fn apply(rows: Option<&PermutationSpec>, x: &Matrix, cols: Option<&PermutationSpec>) -> Result<Matrix> {
    if let Some(r) = rows {
        if r.len() != x.rows() {
            return dim_err(format!("row permutation of {} on {} rows", r.len(), x.rows()));
        }
    }
    if let Some(c) = cols {
        if c.len() != x.cols() {
            return dim_err(format!("column permutation of {} on {} columns", c.len(), x.cols()));
        }
    }
    let rsrc = rows.map(PermutationSpec::source_map);
    let csrc = cols.map(PermutationSpec::source_map);
    Ok(Matrix::from_fn(x.rows(), x.cols(), |r, c| {
        let rr = rsrc.as_ref().map_or(r, |m| m[r]);
        let cc = csrc.as_ref().map_or(c, |m| m[c]);
        x[(rr, cc)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_enumeration() {
        let p = all_permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(all_permutations(1), vec![vec![0]]);
    }

    #[test]
    fn uneven_subsets_only_swap_with_equal_sizes() {
        let st = SetStructure::nested_sizes(vec![2, 1, 2]);
        assert_eq!(st.group_order(), 2 * 2 * 2);
        let all = enumerate(&st, 100).unwrap();
        assert_eq!(all.len(), 8);
        for p in &all {
            if let PermutationSpec::Nested { sub, .. } = p {
                assert_eq!(sub[1], 1);
            }
        }
        for seed in 0..20 {
            let p = sample(&st, seed);
            assert_eq!(p.index_map()[2], 2);
        }
    }

    #[test]
    fn nested_round_trip_through_flat_map() {
        let st = SetStructure::nested(3, 2);
        for p in enumerate(&st, 100).unwrap() {
            let back = PermutationSpec::from_nested_map(&[2, 2, 2], &p.index_map()).unwrap();
            assert_eq!(back, p);
        }
        assert!(PermutationSpec::from_nested_map(&[2, 2], &[0, 2, 1, 3]).is_err());
    }
}
