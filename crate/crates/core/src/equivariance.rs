//! Sampled checks that a function on `[G, T, N, J]` tensors commutes with
//! the permutations of a property, and searches for counterexamples.
//!
//! Axis roles: `G` is batch entries times `reps` representations, `T` the
//! tokens (with their set structure), `N` the blocks of each token and `J`
//! features. A permutation tuple moves representation `r` to `reps[r]`,
//! token `t` to `tokens(t)` and, inside representation `r`, block `n` to
//! `blocks[r][n]`.

use pemo_tensor::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::composer::{apply_head, compose_new, composition_rule, ComposeOptions, HeadKind, IoSizes, PEProperty};
use crate::error::{dim_err, invalid, CoreError, Result};
use crate::pe_modules::{attention, feed_forward, nested_attention, token_mask, Activation, Binder, ModuleKind, WeightVar};
use crate::permutations::{sample_with, PermutationSpec, SetStructure};

/// Shape of the tensors a checked function consumes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub batch: usize,
    pub reps: usize,
    pub tokens: SetStructure,
    pub blocks: usize,
    pub features: usize,
}

impl Layout {
    pub fn shape(&self) -> [usize; 4] {
        [self.batch * self.reps, self.tokens.len(), self.blocks, self.features]
    }

    /// Layout on which `p` is checked for the given system sizes. Joint
    /// properties pair blocks with tokens, so they use `K` blocks.
    pub fn for_property(p: PEProperty, n_t: usize, k: usize, n_r: usize, m: usize, features: usize) -> Layout {
        use PEProperty::*;
        let (reps, tokens, blocks) = match p {
            NonPE | PE1D | Ind2D => (1, SetStructure::normal(k), n_t),
            Joint2D => (1, SetStructure::normal(k), k),
            Nested1D | PartialNested2D => (1, SetStructure::nested(k, n_r), n_t),
            Ind3D => (m, SetStructure::normal(k), n_t),
            PartialNested3D => (m, SetStructure::nested(k, n_r), n_t),
            NestedInd2D | NestedPartialJoint2D => (m, SetStructure::nested(m, k), n_t),
            NestedJoint2D => (m, SetStructure::nested(m, k), k),
        };
        Layout {
            batch: 2,
            reps,
            tokens,
            blocks,
            features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermTuple {
    pub reps: Vec<usize>,
    /// One block map per representation (indexed by source
    /// representation).
    pub blocks: Vec<Vec<usize>>,
    pub tokens: PermutationSpec,
}

impl PermTuple {
    pub fn identity(layout: &Layout) -> PermTuple {
        PermTuple {
            reps: (0..layout.reps).collect(),
            blocks: vec![(0..layout.blocks).collect(); layout.reps],
            tokens: PermutationSpec::identity(layout.tokens.len()),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.reps.iter().enumerate().all(|(i, &r)| i == r)
            && self.blocks.iter().all(|b| b.iter().enumerate().all(|(i, &n)| i == n))
            && self.tokens.is_identity()
    }

    /// Moves every entry of `x` (shape `[B·R, T, N, J]`) to its permuted
    /// position.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        let r = self.reps.len();
        if s.len() != 4 || r == 0 || s[0] % r != 0 || s[1] != self.tokens.len() || self.blocks.iter().any(|b| b.len() != s[2]) {
            return dim_err(format!("permutation for {} reps does not fit tensor {s:?}", r));
        }
        let (gg, t, n, j) = (s[0], s[1], s[2], s[3]);
        let tok = self.tokens.index_map();
        let src = x.data();
        let mut out = vec![0.0; src.len()];
        for g in 0..gg {
            let (b, rep) = (g / r, g % r);
            let g2 = b * r + self.reps[rep];
            for ti in 0..t {
                for ni in 0..n {
                    let from = ((g * t + ti) * n + ni) * j;
                    let to = ((g2 * t + tok[ti]) * n + self.blocks[rep][ni]) * j;
                    out[to..to + j].copy_from_slice(&src[from..from + j]);
                }
            }
        }
        Ok(Tensor::new(s.to_vec(), out)?)
    }
}

fn shuffled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}

fn nested_sizes(layout: &Layout, what: &str) -> Result<Vec<usize>> {
    match &layout.tokens {
        SetStructure::Nested(s) => Ok(s.clone()),
        SetStructure::Normal(_) => invalid(format!("{what} needs a nested token axis")),
    }
}

/// Random member of the permutation class under which `p` requires
/// equivariance.
pub fn sample_perm<R: Rng + ?Sized>(p: PEProperty, layout: &Layout, rng: &mut R) -> Result<PermTuple> {
    use PEProperty::*;
    let (r, n, t) = (layout.reps, layout.blocks, layout.tokens.len());
    let any_tokens = |rng: &mut R| PermutationSpec::Normal(shuffled(t, rng));
    let shared = |rng: &mut R| vec![shuffled(n, rng); r];
    let id_reps: Vec<usize> = (0..r).collect();
    let id_blocks = vec![(0..n).collect::<Vec<_>>(); r];
    Ok(match p {
        NonPE => return Err(CoreError::Unsupported("a non-equivariant policy has no permutation class".into())),
        PE1D => PermTuple {
            reps: id_reps,
            blocks: id_blocks,
            tokens: any_tokens(rng),
        },
        Nested1D => {
            nested_sizes(layout, "nested 1D-PE")?;
            PermTuple {
                reps: id_reps,
                blocks: id_blocks,
                tokens: sample_with(&layout.tokens, rng),
            }
        }
        Ind2D => PermTuple {
            reps: id_reps,
            blocks: shared(rng),
            tokens: any_tokens(rng),
        },
        Joint2D => {
            if n != t {
                return dim_err(format!("joint permutation needs as many blocks as tokens, got {n} and {t}"));
            }
            let m = shuffled(t, rng);
            PermTuple {
                reps: id_reps,
                blocks: vec![m.clone(); r],
                tokens: PermutationSpec::Normal(m),
            }
        }
        PartialNested2D => {
            nested_sizes(layout, "partial-nested 2D-PE")?;
            PermTuple {
                reps: id_reps,
                blocks: shared(rng),
                tokens: sample_with(&layout.tokens, rng),
            }
        }
        Ind3D => PermTuple {
            reps: shuffled(r, rng),
            blocks: shared(rng),
            tokens: any_tokens(rng),
        },
        PartialNested3D => {
            nested_sizes(layout, "partial-nested 3D-PE")?;
            PermTuple {
                reps: shuffled(r, rng),
                blocks: shared(rng),
                tokens: sample_with(&layout.tokens, rng),
            }
        }
        NestedInd2D => {
            nested_sizes(layout, "nested ind. 2D-PE")?;
            PermTuple {
                reps: shuffled(r, rng),
                blocks: (0..r).map(|_| shuffled(n, rng)).collect(),
                tokens: sample_with(&layout.tokens, rng),
            }
        }
        NestedPartialJoint2D | NestedJoint2D => {
            let sizes = nested_sizes(layout, "nested joint permutation")?;
            if sizes.len() != r || sizes.iter().any(|&s| s != sizes[0]) {
                return dim_err(format!("{r} representations need as many equal token subsets, got {sizes:?}"));
            }
            let sigma = shuffled(r, rng);
            let within: Vec<Vec<usize>> = sizes.iter().map(|&s| shuffled(s, rng)).collect();
            let blocks = if p == NestedJoint2D {
                if sizes[0] != n {
                    return dim_err(format!("subsets of {} tokens cannot pair with {n} blocks", sizes[0]));
                }
                (0..r).map(|rep| within[sigma[rep]].clone()).collect()
            } else {
                (0..r).map(|_| shuffled(n, rng)).collect()
            };
            PermTuple {
                reps: sigma.clone(),
                blocks,
                tokens: PermutationSpec::nested(sizes, sigma, within)?,
            }
        }
    })
}

/// A property whose (larger) permutation class a model composed for `p`
/// must violate, when one is expressible on `p`'s layout.
pub fn witness_class(p: PEProperty) -> Option<PEProperty> {
    use PEProperty::*;
    match p {
        PE1D => Some(Ind2D),
        Nested1D => Some(PE1D),
        Joint2D | PartialNested2D => Some(Ind2D),
        NestedInd2D | PartialNested3D => Some(Ind3D),
        NestedPartialJoint2D => Some(NestedInd2D),
        NestedJoint2D => Some(NestedPartialJoint2D),
        NonPE | Ind2D | Ind3D => None,
    }
}

pub fn random_input(layout: &Layout, rng: &mut ChaCha8Rng) -> Tensor {
    let shape = layout.shape();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// A function under test.
pub type TensorFn<'a> = dyn Fn(&Tensor) -> Result<Tensor> + 'a;

/// `max |f(π x) − π f(x)| / max |f(x)|`.
pub fn deviation(f: &TensorFn<'_>, x: &Tensor, p: &PermTuple) -> Result<f64> {
    let y = f(x)?;
    let lhs = f(&p.apply(x)?)?;
    let rhs = p.apply(&y)?;
    if lhs.shape() != rhs.shape() {
        return dim_err(format!("outputs {:?} and {:?}", lhs.shape(), rhs.shape()));
    }
    let diff = lhs.data().iter().zip(rhs.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = y.max_abs();
    if !diff.is_finite() || !scale.is_finite() {
        return Err(CoreError::NonFinite("equivariance check output".into()));
    }
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub property: PEProperty,
    pub layout: Layout,
    pub trials: usize,
    pub max_deviation: f64,
    pub passed: bool,
    /// Permutation with the largest deviation.
    pub worst: Option<PermTuple>,
}

/// Checks `trials` random (input, permutation) pairs of `claimed`'s class.
pub fn equivariance_suite(
    f: &TensorFn<'_>,
    layout: &Layout,
    claimed: PEProperty,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, None);
    for _ in 0..trials {
        let x = random_input(layout, &mut rng);
        let p = sample_perm(claimed, layout, &mut rng)?;
        let d = deviation(f, &x, &p)?;
        if d > worst.0 || worst.1.is_none() {
            worst = (d, Some(p));
        }
    }
    Ok(SuiteResult {
        property: claimed,
        layout: layout.clone(),
        trials,
        max_deviation: worst.0,
        passed: worst.0 < tol,
        worst: worst.1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub class: PEProperty,
    pub perm: PermTuple,
    pub deviation: f64,
}

/// Searches `class` for a permutation the function does not commute with
/// (relative deviation above `threshold`).
pub fn find_violation(
    f: &TensorFn<'_>,
    layout: &Layout,
    class: PEProperty,
    attempts: usize,
    threshold: f64,
    seed: u64,
) -> Result<Option<Counterexample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..attempts {
        let x = random_input(layout, &mut rng);
        let p = sample_perm(class, layout, &mut rng)?;
        let d = deviation(f, &x, &p)?;
        if d > threshold {
            return Ok(Some(Counterexample {
                class,
                perm: p,
                deviation: d,
            }));
        }
    }
    Ok(None)
}

/// Property each building block is claimed to have.
pub fn module_property(kind: ModuleKind) -> PEProperty {
    match kind {
        ModuleKind::Att | ModuleKind::Ffn => PEProperty::PE1D,
        ModuleKind::AttPs | ModuleKind::FfnPs => PEProperty::Ind2D,
        ModuleKind::Natt => PEProperty::Nested1D,
        ModuleKind::NattPs => PEProperty::PartialNested2D,
        ModuleKind::DiagOutput => PEProperty::Joint2D,
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

#[derive(Clone, Debug)]
enum FixedWeight {
    Dense(Tensor),
    Shared(Tensor, Tensor),
}

impl FixedWeight {
    fn random(rng: &mut ChaCha8Rng, shared: bool, j_out: usize, j_in: usize) -> FixedWeight {
        let std = 0.5 / (j_in as f64).sqrt();
        if shared {
            FixedWeight::Shared(random_tensor(rng, &[j_out, j_in], std), random_tensor(rng, &[j_out, j_in], std))
        } else {
            FixedWeight::Dense(random_tensor(rng, &[j_out, j_in], std))
        }
    }

    fn bind(&self, g: &mut Graph) -> WeightVar {
        match self {
            FixedWeight::Dense(t) => WeightVar::Dense(g.constant(t.clone())),
            FixedWeight::Shared(a, b) => WeightVar::Shared {
                u1: g.constant(a.clone()),
                u2: g.constant(b.clone()),
            },
        }
    }
}

/// One building block with random weights as a tensor function. The
/// feed-forward blocks take `tanh(x)` as their context and map `J` features
/// to `J + 1`.
pub fn module_fn(kind: ModuleKind, layout: &Layout, seed: u64) -> Result<Box<TensorFn<'static>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, j) = (layout.blocks, layout.features);
    let shared = kind.is_shared();
    let w = if shared { j } else { n * j };
    let tokens = layout.tokens.clone();
    let reps = layout.reps;
    Ok(match kind {
        ModuleKind::Att | ModuleKind::AttPs => {
            let k = FixedWeight::random(&mut rng, shared, w, w);
            let v = FixedWeight::random(&mut rng, shared, w, w);
            Box::new(move |x: &Tensor| {
                let mut g = Graph::new();
                let xv = g.constant(x.clone());
                let (kv, vv) = (k.bind(&mut g), v.bind(&mut g));
                let y = attention(&mut g, xv, kv, vv, None)?;
                Ok(g.value(y).clone())
            })
        }
        ModuleKind::Natt | ModuleKind::NattPs => {
            let ws: Vec<FixedWeight> = (0..4).map(|_| FixedWeight::random(&mut rng, shared, w, w)).collect();
            Box::new(move |x: &Tensor| {
                let mut g = Graph::new();
                let xv = g.constant(x.clone());
                let b: Vec<WeightVar> = ws.iter().map(|w| w.bind(&mut g)).collect();
                let groups = x.shape()[0];
                let mask = token_mask(&mut g, groups, &tokens)?;
                let y = nested_attention(&mut g, xv, (b[0], b[1]), (b[2], b[3]), mask)?;
                Ok(g.value(y).clone())
            })
        }
        ModuleKind::Ffn | ModuleKind::FfnPs => {
            let out = if shared { j + 1 } else { n * (j + 1) };
            let u = FixedWeight::random(&mut rng, shared, out, w);
            Box::new(move |x: &Tensor| {
                let mut g = Graph::new();
                let xv = g.constant(x.clone());
                let c = g.tanh(xv);
                let uv = u.bind(&mut g);
                let y = feed_forward(&mut g, xv, c, uv, Activation::Tanh)?;
                Ok(g.value(y).clone())
            })
        }
        ModuleKind::DiagOutput => Box::new(move |x: &Tensor| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = apply_head(&mut g, xv, HeadKind::Diag, &tokens, reps)?;
            Ok(g.value(y).clone())
        }),
    })
}

/// A model composed for `target` with random weights, as a tensor function.
pub fn composed_fn(target: PEProperty, layout: &Layout, widths: &[usize], seed: u64) -> Result<Box<TensorFn<'static>>> {
    let width = if composition_rule(target).0.is_shared() {
        layout.features
    } else {
        layout.blocks * layout.features
    };
    let io = IoSizes {
        input: width,
        output: width,
    };
    let (model, pool) = compose_new(target, io, widths, seed, &ComposeOptions::default())?;
    let tokens = layout.tokens.clone();
    let reps = layout.reps;
    Ok(Box::new(move |x: &Tensor| {
        let mut g = Graph::new();
        let mut binder = Binder::new(&pool);
        let xv = g.constant(x.clone());
        let y = model.forward(&mut g, &pool, &mut binder, xv, &tokens, reps)?;
        Ok(g.value(y).clone())
    }))
}

/// A parameter-shared attention and feed-forward layer followed by dense
/// ones: equivariant to token permutations only.
pub fn shared_then_dense_fn(layout: &Layout, width: usize, seed: u64) -> Result<Box<TensorFn<'static>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, j) = (layout.blocks, layout.features);
    let k1 = FixedWeight::random(&mut rng, true, j, j);
    let v1 = FixedWeight::random(&mut rng, true, j, j);
    let f1 = FixedWeight::random(&mut rng, true, width, j);
    let k2 = FixedWeight::random(&mut rng, false, n * width, n * width);
    let v2 = FixedWeight::random(&mut rng, false, n * width, n * width);
    let f2 = FixedWeight::random(&mut rng, false, n * j, n * width);
    Ok(Box::new(move |x: &Tensor| {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (a, b, c) = (k1.bind(&mut g), v1.bind(&mut g), f1.bind(&mut g));
        let ctx = attention(&mut g, xv, a, b, None)?;
        let h = feed_forward(&mut g, xv, ctx, c, Activation::Tanh)?;
        let (a, b, c) = (k2.bind(&mut g), v2.bind(&mut g), f2.bind(&mut g));
        let ctx = attention(&mut g, h, a, b, None)?;
        let h = feed_forward(&mut g, h, ctx, c, Activation::Tanh)?;
        Ok(g.value(h).clone())
    }))
}

/// System sizes swept by [`verify_all`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub n_t: Vec<usize>,
    pub k: Vec<usize>,
    pub n_r: Vec<usize>,
    pub m: Vec<usize>,
    pub trials: usize,
    pub tol: f64,
    /// Relative deviation that counts as a violation in negative searches.
    pub violation_threshold: f64,
    pub attempts: usize,
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n_t: vec![2, 3, 4, 5],
            k: vec![2, 3, 4],
            n_r: vec![1, 2, 3],
            m: vec![2, 3],
            trials: 100,
            tol: 1e-9,
            violation_threshold: 1e-6,
            attempts: 200,
            widths: vec![3, 3],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveCheck {
    pub subject: String,
    pub property: PEProperty,
    pub layouts: usize,
    pub trials: usize,
    pub max_deviation: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeCheck {
    pub subject: String,
    pub claimed: PEProperty,
    pub class: PEProperty,
    pub layout: Layout,
    pub counterexample: Option<Counterexample>,
}

impl NegativeCheck {
    pub fn found(&self) -> bool {
        self.counterexample.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub positive: Vec<PositiveCheck>,
    pub negative: Vec<NegativeCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.positive.iter().all(|p| p.passed) && self.negative.iter().all(NegativeCheck::found)
    }
}

fn distinct_layouts(p: PEProperty, cfg: &VerifyConfig, features: usize) -> Vec<Layout> {
    let mut out: Vec<Layout> = Vec::new();
    for &n_t in &cfg.n_t {
        for &k in &cfg.k {
            for &n_r in &cfg.n_r {
                for &m in &cfg.m {
                    let l = Layout::for_property(p, n_t, k, n_r, m, features);
                    if !out.contains(&l) {
                        out.push(l);
                    }
                }
            }
        }
    }
    out
}

/// Layout where the witness class is strictly larger than the claimed one:
/// at least two subsets of at least two tokens, and more than one block.
fn witness_layout(p: PEProperty, cfg: &VerifyConfig, features: usize) -> Layout {
    let pick = |v: &[usize], min: usize| v.iter().copied().find(|&x| x >= min).unwrap_or(min);
    Layout::for_property(p, pick(&cfg.n_t, 3), pick(&cfg.k, 3), pick(&cfg.n_r, 2), pick(&cfg.m, 2), features)
}

fn check_positive(
    subject: String,
    f_for: &dyn Fn(&Layout, u64) -> Result<Box<TensorFn<'static>>>,
    p: PEProperty,
    cfg: &VerifyConfig,
    features: usize,
) -> Result<PositiveCheck> {
    let layouts = distinct_layouts(p, cfg, features);
    let mut max_dev = 0.0f64;
    for (i, l) in layouts.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        let f = f_for(l, seed)?;
        let r = equivariance_suite(f.as_ref(), l, p, cfg.trials, cfg.tol, seed)?;
        max_dev = max_dev.max(r.max_deviation);
    }
    Ok(PositiveCheck {
        subject,
        property: p,
        layouts: layouts.len(),
        trials: cfg.trials * layouts.len(),
        max_deviation: max_dev,
        passed: max_dev < cfg.tol,
    })
}

/// Every building block and every composed model against its claimed
/// property over the configured sizes, plus the counterexample searches
/// for strict inclusions.
pub fn verify_all(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let features = 2;
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for kind in ModuleKind::all() {
        let p = module_property(kind);
        let f_for = move |l: &Layout, s: u64| module_fn(kind, l, s);
        positive.push(check_positive(format!("module {}", kind.name()), &f_for, p, cfg, features)?);
    }
    for kind in [ModuleKind::Natt, ModuleKind::NattPs, ModuleKind::Att] {
        let claimed = module_property(kind);
        let class = witness_class(claimed).expect("modules with a witness class");
        let layout = witness_layout(claimed, cfg, features);
        let f = module_fn(kind, &layout, cfg.seed)?;
        negative.push(NegativeCheck {
            subject: format!("module {}", kind.name()),
            claimed,
            class,
            counterexample: find_violation(f.as_ref(), &layout, class, cfg.attempts, cfg.violation_threshold, cfg.seed)?,
            layout,
        });
    }
    for p in PEProperty::ALL {
        if p == PEProperty::NonPE {
            continue;
        }
        let widths = cfg.widths.clone();
        let f_for = move |l: &Layout, s: u64| composed_fn(p, l, &widths, s);
        positive.push(check_positive(format!("composed {}", p.label()), &f_for, p, cfg, features)?);
        if let Some(class) = witness_class(p) {
            let layout = witness_layout(p, cfg, features);
            let f = composed_fn(p, &layout, &cfg.widths, cfg.seed)?;
            negative.push(NegativeCheck {
                subject: format!("composed {}", p.label()),
                claimed: p,
                class,
                counterexample: find_violation(f.as_ref(), &layout, class, cfg.attempts, cfg.violation_threshold, cfg.seed)?,
                layout,
            });
        }
    }
    Ok(VerifyReport { positive, negative })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_tuple_is_a_no_op() {
        let l = Layout::for_property(PEProperty::NestedInd2D, 3, 2, 1, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_input(&l, &mut rng);
        assert_eq!(PermTuple::identity(&l).apply(&x).unwrap(), x);
    }

    #[test]
    fn joint_samples_pair_blocks_with_tokens() {
        let l = Layout::for_property(PEProperty::NestedJoint2D, 2, 3, 1, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = sample_perm(PEProperty::NestedJoint2D, &l, &mut rng).unwrap();
            let map = p.tokens.index_map();
            for r in 0..2 {
                for e in 0..3 {
                    let dest = map[r * 3 + e];
                    assert_eq!(dest / 3, p.reps[r]);
                    assert_eq!(dest % 3, p.blocks[r][e]);
                }
            }
        }
    }
}
