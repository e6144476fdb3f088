//! Attention and feed-forward modules, their parameter-shared variants,
//! nested attention, and the parameter-free output layers.
//!
//! Hidden states are rank-4 tensors `[G, T, N, J]`: `G` independent groups
//! (batch entries, times representations or resource blocks), `T` tokens,
//! `N` blocks per token (transmit antennas for precoding tasks) and `J`
//! features per block. Dense modules see the flattened `N·J` width of each
//! token. Attention scores are the raw bilinear forms `d_k^T U^K d_i`;
//! there is no softmax and no scaling.

use std::collections::BTreeMap;
use std::rc::Rc;

use pemo_tensor::{Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, CoreError, Result};
use crate::matrix::Matrix;
use crate::permutations::{mask_matrix, SetStructure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModuleKind {
    Att,
    Ffn,
    AttPs,
    FfnPs,
    Natt,
    NattPs,
    DiagOutput,
}

impl ModuleKind {
    pub fn name(self) -> &'static str {
        match self {
            ModuleKind::Att => "att",
            ModuleKind::Ffn => "ffn",
            ModuleKind::AttPs => "att_ps",
            ModuleKind::FfnPs => "ffn_ps",
            ModuleKind::Natt => "natt",
            ModuleKind::NattPs => "natt_ps",
            ModuleKind::DiagOutput => "diag_output",
        }
    }

    pub fn is_shared(self) -> bool {
        matches!(self, ModuleKind::AttPs | ModuleKind::FfnPs | ModuleKind::NattPs)
    }

    pub fn all() -> [ModuleKind; 7] {
        [
            ModuleKind::Att,
            ModuleKind::Ffn,
            ModuleKind::AttPs,
            ModuleKind::FfnPs,
            ModuleKind::Natt,
            ModuleKind::NattPs,
            ModuleKind::DiagOutput,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    /// Test mode.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenLayout {
    Flat { n_tokens: usize },
    Nested { n_sub: usize, n_s: usize },
    /// Each of the `n_sub * n_s` nested tokens carries `n_reps`
    /// representations that are processed independently with shared weights.
    MultiRep { n_reps: usize, n_sub: usize, n_s: usize },
}

impl TokenLayout {
    pub fn n_tokens(&self) -> usize {
        match *self {
            TokenLayout::Flat { n_tokens } => n_tokens,
            TokenLayout::Nested { n_sub, n_s } | TokenLayout::MultiRep { n_sub, n_s, .. } => n_sub * n_s,
        }
    }

    pub fn n_reps(&self) -> usize {
        match *self {
            TokenLayout::MultiRep { n_reps, .. } => n_reps,
            _ => 1,
        }
    }

    /// Set structure of the token axis.
    pub fn token_structure(&self) -> SetStructure {
        match *self {
            TokenLayout::Flat { n_tokens } => SetStructure::normal(n_tokens),
            TokenLayout::Nested { n_sub, n_s } | TokenLayout::MultiRep { n_sub, n_s, .. } => {
                SetStructure::nested(n_sub, n_s)
            }
        }
    }

    pub fn is_nested(&self) -> bool {
        !matches!(self, TokenLayout::Flat { .. })
    }
}

/// Token representations of a batch.
///
/// Storage is `[batch * n_reps, n_tokens, n_block, features]`. The width
/// vector of a token, as exposed by [`TokenBatch::token`], is feature-major:
/// feature 0 of every block, then feature 1 of every block, and so on. For
/// channel tokens this is the real parts of all antennas followed by the
/// imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenBatch {
    pub layout: TokenLayout,
    pub batch: usize,
    pub n_block: usize,
    pub features: usize,
    pub data: Tensor,
}

impl TokenBatch {
    pub fn new(layout: TokenLayout, batch: usize, n_block: usize, features: usize, data: Vec<f64>) -> Result<Self> {
        let shape = vec![batch * layout.n_reps(), layout.n_tokens(), n_block, features];
        let data = Tensor::new(shape, data)?;
        Ok(TokenBatch {
            layout,
            batch,
            n_block,
            features,
            data,
        })
    }

    pub fn from_tensor(layout: TokenLayout, batch: usize, data: Tensor) -> Result<Self> {
        let s = data.shape().to_vec();
        if s.len() != 4 || s[0] != batch * layout.n_reps() || s[1] != layout.n_tokens() {
            return dim_err(format!("token tensor {s:?} does not match {layout:?} with batch {batch}"));
        }
        Ok(TokenBatch {
            layout,
            batch,
            n_block: s[2],
            features: s[3],
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.n_block * self.features
    }

    pub fn groups(&self) -> usize {
        self.batch * self.layout.n_reps()
    }

    /// Feature-major width vector of token `t` in representation `rep` of
    /// batch entry `b`.
    pub fn token(&self, b: usize, rep: usize, t: usize) -> Vec<f64> {
        let g = b * self.layout.n_reps() + rep;
        let mut out = Vec::with_capacity(self.width());
        for j in 0..self.features {
            for n in 0..self.n_block {
                out.push(self.data.at(&[g, t, n, j]));
            }
        }
        out
    }
}

/// Weight with identical diagonal blocks `u1` and identical off-diagonal
/// blocks `u2`, acting on `n_block` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedWeight {
    pub u1: Tensor,
    pub u2: Tensor,
    pub n_block: usize,
}

impl SharedWeight {
    pub fn new(u1: Tensor, u2: Tensor, n_block: usize) -> Result<Self> {
        if u1.shape().len() != 2 || u1.shape() != u2.shape() || n_block == 0 {
            return dim_err(format!("shared blocks {:?} and {:?}", u1.shape(), u2.shape()));
        }
        Ok(SharedWeight { u1, u2, n_block })
    }

    pub fn j_out(&self) -> usize {
        self.u1.shape()[0]
    }

    pub fn j_in(&self) -> usize {
        self.u1.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        2 * self.j_out() * self.j_in()
    }

    /// Dense `(J_out·N) x (J_in·N)` matrix with contiguous blocks.
    pub fn realize(&self) -> Matrix {
        let (jo, ji, n) = (self.j_out(), self.j_in(), self.n_block);
        Matrix::from_fn(jo * n, ji * n, |r, c| {
            let (br, bc) = (r / jo, c / ji);
            let src = if br == bc { &self.u1 } else { &self.u2 };
            src.at(&[r % jo, c % ji])
        })
    }
}

/// Applies a shared weight to a block-contiguous vector:
/// block `n` of the result is `(u1 - u2) d_n + u2 Σ_m d_m`.
pub fn shared_matvec(w: &SharedWeight, d: &[f64]) -> Result<Vec<f64>> {
    let (jo, ji, n) = (w.j_out(), w.j_in(), w.n_block);
    if d.len() != ji * n {
        return dim_err(format!("vector of length {} for {n} blocks of {ji}", d.len()));
    }
    let mut total = vec![0.0; ji];
    for blk in d.chunks(ji) {
        total.iter_mut().zip(blk).for_each(|(t, x)| *t += x);
    }
    let mut out = vec![0.0; jo * n];
    for (b, blk) in d.chunks(ji).enumerate() {
        for r in 0..jo {
            let mut s = 0.0;
            for c in 0..ji {
                let u1 = w.u1.at(&[r, c]);
                let u2 = w.u2.at(&[r, c]);
                s += (u1 - u2) * blk[c] + u2 * total[c];
            }
            out[b * jo + r] = s;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    Dense(Tensor),
    Shared(SharedWeight),
}

impl Weight {
    pub fn param_count(&self) -> usize {
        match self {
            Weight::Dense(t) => t.numel(),
            Weight::Shared(s) => s.param_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttParams {
    pub key: Weight,
    pub value: Weight,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FfnParams {
    pub weight: Weight,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NattParams {
    pub local_key: Weight,
    pub local_value: Weight,
    pub global_key: Weight,
    pub global_value: Weight,
}

/// A weight bound into a graph.
#[derive(Clone, Copy, Debug)]
pub enum WeightVar {
    Dense(Var),
    Shared { u1: Var, u2: Var },
}

fn bind_weight(g: &mut Graph, w: &Weight) -> WeightVar {
    match w {
        Weight::Dense(t) => WeightVar::Dense(g.param(t)),
        Weight::Shared(s) => WeightVar::Shared {
            u1: g.param(&s.u1),
            u2: g.param(&s.u2),
        },
    }
}

fn dims(g: &Graph, x: Var) -> Result<[usize; 4]> {
    match *g.shape(x) {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => dim_err(format!("hidden state must be [G,T,N,J], got {s:?}")),
    }
}

/// Broadcast indices that repeat every `inner`-chunk of an `[outer, inner]`
/// tensor `reps` times along a new middle axis.
fn repeat_middle(outer: usize, reps: usize, inner: usize) -> Rc<[usize]> {
    let mut idx = Vec::with_capacity(outer * reps * inner);
    for o in 0..outer {
        for _ in 0..reps {
            idx.extend(o * inner..(o + 1) * inner);
        }
    }
    idx.into()
}

/// Applies a weight to every token: dense weights act on the flattened
/// `N·J` width, shared weights act blockwise.
pub fn linear(g: &mut Graph, x: Var, w: WeightVar) -> Result<Var> {
    let [gg, t, n, j] = dims(g, x)?;
    match w {
        WeightVar::Dense(u) => {
            let (out, inp) = match *g.shape(u) {
                [o, i] => (o, i),
                ref s => return dim_err(format!("dense weight {s:?}")),
            };
            if inp != n * j {
                return dim_err(format!("dense weight expects width {inp}, tokens have {}", n * j));
            }
            if out % n != 0 {
                return dim_err(format!("dense output width {out} not divisible into {n} blocks"));
            }
            let xf = g.reshape(x, &[gg * t, n * j])?;
            let ut = g.transpose(u)?;
            let y = g.matmul(xf, ut)?;
            Ok(g.reshape(y, &[gg, t, n, out / n])?)
        }
        WeightVar::Shared { u1, u2 } => {
            let (jo, ji) = match *g.shape(u1) {
                [o, i] => (o, i),
                ref s => return dim_err(format!("shared weight {s:?}")),
            };
            if ji != j {
                return dim_err(format!("shared weight expects {ji} features per block, tokens have {j}"));
            }
            let diff = g.sub(u1, u2)?;
            let diff_t = g.transpose(diff)?;
            let u2_t = g.transpose(u2)?;
            let xb = g.reshape(x, &[gg * t * n, j])?;
            let own = g.matmul(xb, diff_t)?;
            let total = g.sum_axis(x, 2)?;
            let total = g.reshape(total, &[gg * t, j])?;
            let common = g.matmul(total, u2_t)?;
            let common = g.gather(common, repeat_middle(gg * t, n, jo), &[gg * t * n, jo])?;
            let y = g.add(own, common)?;
            Ok(g.reshape(y, &[gg, t, n, jo])?)
        }
    }
}

/// `c_k = Σ_i (d_k^T U^K d_i) U^V d_i`, optionally with the score matrix
/// multiplied elementwise by a `[G,T,T]` mask.
pub fn attention(g: &mut Graph, x: Var, key: WeightVar, value: WeightVar, mask: Option<Var>) -> Result<Var> {
    let [gg, t, n, j] = dims(g, x)?;
    let w = n * j;
    let xf = g.reshape(x, &[gg, t, w])?;
    let kx = linear(g, x, key)?;
    if g.shape(kx) != [gg, t, n, j] {
        return dim_err("attention key weight must be square");
    }
    let kx = g.reshape(kx, &[gg, t, w])?;
    let kx_t = g.transpose(kx)?;
    let mut scores = g.matmul(xf, kx_t)?;
    if let Some(m) = mask {
        scores = g.mul(scores, m)?;
    }
    let vx = linear(g, x, value)?;
    if g.shape(vx) != [gg, t, n, j] {
        return dim_err("attention value weight must be square");
    }
    let vx = g.reshape(vx, &[gg, t, w])?;
    let c = g.matmul(scores, vx)?;
    Ok(g.reshape(c, &[gg, t, n, j])?)
}

/// Local attention inside each subset (masked scores) plus global
/// attention over all tokens, with independent weights.
pub fn nested_attention(
    g: &mut Graph,
    x: Var,
    local: (WeightVar, WeightVar),
    global: (WeightVar, WeightVar),
    mask: Var,
) -> Result<Var> {
    let c_local = attention(g, x, local.0, local.1, Some(mask))?;
    let c_global = attention(g, x, global.0, global.1, None)?;
    Ok(g.add(c_local, c_global)?)
}

/// `σ(U^F (d + c))`.
pub fn feed_forward(g: &mut Graph, x: Var, c: Var, w: WeightVar, act: Activation) -> Result<Var> {
    if g.shape(x) != g.shape(c) {
        return dim_err(format!("tokens {:?} and context {:?}", g.shape(x), g.shape(c)));
    }
    let s = g.add(x, c)?;
    let y = linear(g, s, w)?;
    Ok(match act {
        Activation::Tanh => g.tanh(y),
        Activation::Identity => y,
    })
}

/// Constant `[G, T, T]` subset mask for a nested token axis.
pub fn token_mask(g: &mut Graph, groups: usize, structure: &SetStructure) -> Result<Var> {
    let m = mask_matrix(structure);
    let t = m.rows();
    let mut data = Vec::with_capacity(groups * t * t);
    for _ in 0..groups {
        data.extend_from_slice(m.data());
    }
    Ok(g.constant(Tensor::new(vec![groups, t, t], data)?))
}

fn check_weight_fits(w: &Weight, tokens: &TokenBatch) -> Result<()> {
    match w {
        Weight::Dense(u) => {
            if u.shape().len() != 2 || u.shape()[1] != tokens.width() {
                return dim_err(format!("dense weight {:?} on token width {}", u.shape(), tokens.width()));
            }
        }
        Weight::Shared(s) => {
            if s.j_in() != tokens.features {
                return dim_err(format!("shared weight with {} input features on tokens with {}", s.j_in(), tokens.features));
            }
        }
    }
    Ok(())
}

fn run_on_tokens(
    tokens: &TokenBatch,
    f: impl FnOnce(&mut Graph, Var) -> Result<Var>,
) -> Result<TokenBatch> {
    let mut g = Graph::new();
    let x = g.constant(tokens.data.clone());
    let y = f(&mut g, x)?;
    TokenBatch::from_tensor(tokens.layout.clone(), tokens.batch, g.value(y).clone())
}

/// Context vectors of the attention sub-layer for every token.
pub fn att_forward(tokens: &TokenBatch, params: &AttParams) -> Result<TokenBatch> {
    check_weight_fits(&params.key, tokens)?;
    check_weight_fits(&params.value, tokens)?;
    run_on_tokens(tokens, |g, x| {
        let k = bind_weight(g, &params.key);
        let v = bind_weight(g, &params.value);
        attention(g, x, k, v, None)
    })
}

pub fn ffn_forward(tokens: &TokenBatch, context: &TokenBatch, params: &FfnParams, act: Activation) -> Result<TokenBatch> {
    if tokens.data.shape() != context.data.shape() {
        return dim_err(format!(
            "tokens {:?} and context {:?}",
            tokens.data.shape(),
            context.data.shape()
        ));
    }
    check_weight_fits(&params.weight, tokens)?;
    run_on_tokens(tokens, |g, x| {
        let c = g.constant(context.data.clone());
        let w = bind_weight(g, &params.weight);
        feed_forward(g, x, c, w, act)
    })
}

pub fn natt_forward(tokens: &TokenBatch, params: &NattParams) -> Result<TokenBatch> {
    if !tokens.layout.is_nested() {
        return invalid("nested attention needs a nested token layout");
    }
    for w in [&params.local_key, &params.local_value, &params.global_key, &params.global_value] {
        check_weight_fits(w, tokens)?;
    }
    let structure = tokens.layout.token_structure();
    run_on_tokens(tokens, |g, x| {
        let lk = bind_weight(g, &params.local_key);
        let lv = bind_weight(g, &params.local_value);
        let gk = bind_weight(g, &params.global_key);
        let gv = bind_weight(g, &params.global_value);
        let mask = token_mask(g, tokens.groups(), &structure)?;
        nested_attention(g, x, (lk, lv), (gk, gv), mask)
    })
}

/// Keeps the entries of `x` that lie in matching diagonal blocks and zeroes
/// the rest. With unit blocks this extracts the diagonal.
pub fn diag_output(x: &Matrix, block_rows: &[usize], block_cols: &[usize]) -> Result<Matrix> {
    if block_rows.len() != block_cols.len()
        || block_rows.iter().sum::<usize>() != x.rows()
        || block_cols.iter().sum::<usize>() != x.cols()
    {
        return invalid(format!(
            "blocks {block_rows:?} x {block_cols:?} do not tile a {}x{} matrix",
            x.rows(),
            x.cols()
        ));
    }
    let owner = |sizes: &[usize]| -> Vec<usize> {
        sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat(k).take(s))
            .collect()
    };
    let (ro, co) = (owner(block_rows), owner(block_cols));
    Ok(Matrix::from_fn(x.rows(), x.cols(), |r, c| if ro[r] == co[c] { x[(r, c)] } else { 0.0 }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerGrouping {
    Global,
    /// Contiguous equal groups, one per base station.
    PerBs(usize),
}

/// Scales each group so its squared norm equals `budget`.
pub fn power_normalize(v: &[f64], budget: f64, grouping: PowerGrouping) -> Result<Vec<f64>> {
    if !(budget > 0.0) {
        return invalid("power budget must be positive");
    }
    let groups = match grouping {
        PowerGrouping::Global => 1,
        PowerGrouping::PerBs(m) => m,
    };
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(v.to_vec()));
    let y = power_normalize_var(&mut g, x, groups, budget)?;
    Ok(g.data(y).to_vec())
}

/// Differentiable group power normalization of a tensor whose flattened
/// values split into `groups` equal contiguous groups.
pub fn power_normalize_var(g: &mut Graph, v: Var, groups: usize, budget: f64) -> Result<Var> {
    let shape = g.shape(v).to_vec();
    let n: usize = shape.iter().product();
    if groups == 0 || n % groups != 0 {
        return dim_err(format!("{n} values do not split into {groups} power groups"));
    }
    let size = n / groups;
    let flat = g.reshape(v, &[groups, size])?;
    let sq = g.square(flat);
    let power = g.sum_axis(sq, 1)?;
    let inv = g.reciprocal(power).map_err(|_| CoreError::Invalid("power group is all zero; scale undefined".into()))?;
    let ratio = g.scale(inv, budget);
    let factor = g.sqrt(ratio)?;
    let factor = g.gather(factor, repeat_middle(groups, size, 1), &[groups, size])?;
    let out = g.mul(flat, factor)?;
    Ok(g.reshape(out, &shape)?)
}

/// Named trainable tensors. Each tensor is created once per name; asking
/// again returns the existing index, which is how modules share weights.
#[derive(Clone, Debug, Default)]
pub struct ParamPool {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
    seed: u64,
}

/// Stable 64-bit FNV-1a hash, used to derive per-parameter seeds.
pub(crate) fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

impl ParamPool {
    pub fn new(seed: u64) -> Self {
        ParamPool {
            seed,
            ..Default::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Returns the index of `name`, creating it with i.i.d. normal entries
    /// of standard deviation `std` if absent. The draw depends only on the
    /// pool seed and the name.
    pub fn get_or_create(&mut self, name: &str, shape: &[usize], std: f64) -> Result<usize> {
        if let Some(&i) = self.index.get(name) {
            if self.tensors[i].shape() != shape {
                return dim_err(format!("parameter {name} exists with shape {:?}, requested {shape:?}", self.tensors[i].shape()));
            }
            return Ok(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name));
        let normal = Normal::new(0.0, std).map_err(|e| CoreError::Invalid(e.to_string()))?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let t = Tensor::new(shape.to_vec(), data)?.into_param();
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.index.insert(name.to_string(), self.tensors.len() - 1);
        Ok(self.tensors.len() - 1)
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> usize {
        if let Some(&i) = self.index.get(name) {
            self.tensors[i] = t.into_param();
            return i;
        }
        self.names.push(name.to_string());
        self.tensors.push(t.into_param());
        self.index.insert(name.to_string(), self.tensors.len() - 1);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn count_of(&self, ids: &[usize]) -> usize {
        let mut seen: Vec<usize> = ids.to_vec();
        seen.sort_unstable();
        seen.dedup();
        seen.iter().map(|&i| self.tensors[i].numel()).sum()
    }

    pub fn named_arrays(&self) -> Vec<(String, Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| {
                let mut t = t.clone();
                t.clear_grad();
                (n.clone(), t)
            })
            .collect()
    }

    /// Replaces values from named arrays; every name must already exist
    /// with the same shape.
    pub fn load_named(&mut self, arrays: &[(String, Tensor)]) -> Result<()> {
        for (name, t) in arrays {
            let i = self.find(name).ok_or_else(|| CoreError::MissingModule(name.clone()))?;
            if self.tensors[i].shape() != t.shape() {
                return dim_err(format!("{name}: stored {:?}, loaded {:?}", self.tensors[i].shape(), t.shape()));
            }
            self.tensors[i].data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }

    /// Bit patterns of all values, for determinism checks.
    pub fn fingerprint(&self) -> Vec<u64> {
        self.tensors.iter().flat_map(|t| t.data().iter().map(|x| x.to_bits())).collect()
    }
}

/// Lazily records pool parameters into one graph.
pub struct Binder {
    vars: Vec<Option<Var>>,
}

impl Binder {
    pub fn new(pool: &ParamPool) -> Self {
        Binder {
            vars: vec![None; pool.len()],
        }
    }

    pub fn var(&mut self, g: &mut Graph, pool: &ParamPool, id: usize) -> Var {
        if self.vars.len() < pool.len() {
            self.vars.resize(pool.len(), None);
        }
        *self.vars[id].get_or_insert_with(|| g.param(pool.tensor(id)))
    }

    /// Pool indices bound so far with their graph variables.
    pub fn bound(&self) -> Vec<(usize, Var)> {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .collect()
    }
}
