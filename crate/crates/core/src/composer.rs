//! Permutation-equivariance taxonomy, the policy table, and assembly of
//! models from modules.

use std::collections::BTreeMap;
use std::fmt;

use pemo_tensor::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoreError, Result};
use crate::pe_modules::{
    attention, feed_forward, linear, nested_attention, token_mask, Activation, Binder, ModuleKind, ParamPool,
    WeightVar,
};
use crate::permutations::SetStructure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PEProperty {
    NonPE,
    PE1D,
    Nested1D,
    Ind2D,
    Joint2D,
    PartialNested2D,
    NestedInd2D,
    NestedPartialJoint2D,
    NestedJoint2D,
    Ind3D,
    PartialNested3D,
}

impl PEProperty {
    pub const ALL: [PEProperty; 11] = [
        PEProperty::NonPE,
        PEProperty::PE1D,
        PEProperty::Nested1D,
        PEProperty::Ind2D,
        PEProperty::Joint2D,
        PEProperty::PartialNested2D,
        PEProperty::NestedInd2D,
        PEProperty::NestedPartialJoint2D,
        PEProperty::NestedJoint2D,
        PEProperty::Ind3D,
        PEProperty::PartialNested3D,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PEProperty::NonPE => "Non-PE",
            PEProperty::PE1D => "1D-PE",
            PEProperty::Nested1D => "Nested 1D-PE",
            PEProperty::Ind2D => "Ind. 2D-PE",
            PEProperty::Joint2D => "Joint 2D-PE",
            PEProperty::PartialNested2D => "Partial-nested 2D-PE",
            PEProperty::NestedInd2D => "Nested ind. 2D-PE",
            PEProperty::NestedPartialJoint2D => "Nested partial-joint 2D-PE",
            PEProperty::NestedJoint2D => "Nested joint 2D-PE",
            PEProperty::Ind3D => "Ind. 3D-PE",
            PEProperty::PartialNested3D => "Partial-nested 3D-PE",
        }
    }
}

impl fmt::Display for PEProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Direct inclusions between hypothesis spaces: `(a, b)` means every
/// function with property `a` also has property `b`.
const COVERS: [(PEProperty, PEProperty); 9] = [
    (PEProperty::Ind3D, PEProperty::Ind2D),
    (PEProperty::Ind2D, PEProperty::PartialNested2D),
    (PEProperty::PartialNested2D, PEProperty::NestedInd2D),
    (PEProperty::NestedInd2D, PEProperty::PE1D),
    (PEProperty::PE1D, PEProperty::Nested1D),
    (PEProperty::Ind2D, PEProperty::Joint2D),
    (PEProperty::Joint2D, PEProperty::NestedPartialJoint2D),
    (PEProperty::NestedPartialJoint2D, PEProperty::NestedJoint2D),
    (PEProperty::NestedInd2D, PEProperty::NestedPartialJoint2D),
];

/// True iff the hypothesis space of `a` is contained in that of `b`.
pub fn hypothesis_leq(a: PEProperty, b: PEProperty) -> bool {
    if a == b {
        return true;
    }
    let mut frontier = vec![a];
    let mut seen = vec![a];
    while let Some(p) = frontier.pop() {
        for &(lo, hi) in &COVERS {
            if lo == p && !seen.contains(&hi) {
                if hi == b {
                    return true;
                }
                seen.push(hi);
                frontier.push(hi);
            }
        }
    }
    false
}

/// Wireless policies and their permutation properties.
#[derive(Clone, Debug)]
pub struct PolicyTable {
    rows: Vec<(String, PEProperty)>,
}

impl Default for PolicyTable {
    fn default() -> Self {
        use PEProperty::*;
        let rows: &[(&str, PEProperty)] = &[
            ("SU-MISO channel prediction", NonPE),
            ("SU-MISO channel estimation", NonPE),
            ("MU-MIMO channel prediction", PE1D),
            ("MU-MIMO channel estimation", PE1D),
            ("Wideband SU-MISO channel prediction", PE1D),
            ("Wideband SU-MISO channel estimation", PE1D),
            ("Bandwidth allocation", PE1D),
            ("Multi-cast beamforming", Nested1D),
            ("MU-MISO precoding", Ind2D),
            ("User association", Ind2D),
            ("Signal detection", Ind2D),
            ("MU-MIMO precoding", PartialNested2D),
            ("Cell-free MU-MISO beamforming", PartialNested2D),
            ("Cooperative MU-MISO beamforming", PartialNested2D),
            ("D2D power control", Joint2D),
            ("Link scheduling", Joint2D),
            ("Cell-free MU-MIMO beamforming", NestedInd2D),
            ("Cooperative MU-MIMO beamforming", NestedInd2D),
            ("CB", NestedPartialJoint2D),
            ("Multi-cell power allocation", NestedJoint2D),
            ("IRS-aided MU-MISO precoding", Ind3D),
            ("Wideband MU-MISO precoding", Ind3D),
            ("Hybrid MU-MISO precoding", Ind3D),
            ("Joint beamforming and sensing", Ind3D),
            ("IRS-aided MU-MIMO precoding", PartialNested3D),
            ("Wideband MU-MIMO precoding", PartialNested3D),
            ("Partially-connected hybrid precoding", PartialNested3D),
            // Names used by the implemented tasks. Channel estimation here is
            // multi-user with users as tokens.
            ("Channel estimation", PE1D),
            ("Power allocation", NestedJoint2D),
            ("Coordinated beamforming", NestedPartialJoint2D),
        ];
        PolicyTable {
            rows: rows.iter().map(|&(n, p)| (n.to_string(), p)).collect(),
        }
    }
}

impl PolicyTable {
    pub fn rows(&self) -> &[(String, PEProperty)] {
        &self.rows
    }

    pub fn lookup(&self, policy: &str) -> Result<PEProperty> {
        self.rows
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(policy))
            .map(|&(_, p)| p)
            .ok_or_else(|| CoreError::Unknown {
                kind: "policy",
                name: policy.to_string(),
                known: self.rows.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", "),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    None,
    /// Keeps block `n` of token `t` only when `n == t`.
    Diag,
    /// Keeps token `(m, k)` of representation `m'` only when `m == m'`.
    BlockDiag,
    /// Block-diagonal in the representation and diagonal in `(n, k)`.
    DoubleDiag,
    /// Per-user power variables mapped to precoders by the downlink-uplink
    /// duality structure.
    Duality,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::None => "none",
            HeadKind::Diag => "diag",
            HeadKind::BlockDiag => "block_diag",
            HeadKind::DoubleDiag => "double_diag",
            HeadKind::Duality => "duality",
        }
    }
}

/// Attention and feed-forward module kinds selected for a property, and the
/// output head. Non-equivariant targets fall back to the dense stack.
pub fn composition_rule(target: PEProperty) -> (ModuleKind, ModuleKind, HeadKind) {
    use PEProperty::*;
    match target {
        NonPE | PE1D => (ModuleKind::Att, ModuleKind::Ffn, HeadKind::None),
        Nested1D => (ModuleKind::Natt, ModuleKind::Ffn, HeadKind::None),
        Ind2D | Ind3D => (ModuleKind::AttPs, ModuleKind::FfnPs, HeadKind::None),
        Joint2D => (ModuleKind::AttPs, ModuleKind::FfnPs, HeadKind::Diag),
        PartialNested2D | NestedInd2D | PartialNested3D => (ModuleKind::NattPs, ModuleKind::FfnPs, HeadKind::None),
        NestedPartialJoint2D => (ModuleKind::NattPs, ModuleKind::FfnPs, HeadKind::BlockDiag),
        NestedJoint2D => (ModuleKind::NattPs, ModuleKind::FfnPs, HeadKind::DoubleDiag),
    }
}

/// Standard deviations used when parameters are first created.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitScale {
    /// Attention key and value matrices, relative to `1/width`.
    pub attention: f64,
    /// Feed-forward and output matrices, relative to `1/sqrt(width)`.
    pub feed_forward: f64,
    /// Off-diagonal shared blocks relative to the diagonal ones.
    pub off_diagonal: f64,
}

impl Default for InitScale {
    fn default() -> Self {
        InitScale {
            attention: 0.02,
            feed_forward: 0.03,
            off_diagonal: 0.25,
        }
    }
}

/// Input and output widths of a stack: features per block for
/// parameter-shared stacks, whole token widths for dense ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoSizes {
    pub input: usize,
    pub output: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeOptions {
    pub activation: Activation,
    /// Parameter-shared attention reuses the global branch of the nested
    /// parameter-shared attention at the same layer.
    pub reuse_global_branch: bool,
    pub init: InitScale,
    pub pool_id: u64,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions {
            activation: Activation::Tanh,
            reuse_global_branch: true,
            init: InitScale::default(),
            pool_id: 0,
        }
    }
}

/// One module instance with its parameters, in pool order of `matrices`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRef {
    pub kind: ModuleKind,
    pub layer: usize,
    pub j_in: usize,
    pub j_out: usize,
    /// (matrix name, pool index).
    pub matrices: Vec<(String, usize)>,
}

impl LayerRef {
    fn id(&self, name: &str) -> Result<usize> {
        self.matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, i)| i)
            .ok_or_else(|| CoreError::MissingModule(format!("{}.{}.{name}", self.kind.name(), self.layer)))
    }

    fn weight(&self, g: &mut Graph, pool: &ParamPool, b: &mut Binder, base: &str) -> Result<WeightVar> {
        if self.kind.is_shared() {
            let u1 = b.var(g, pool, self.id(&format!("{base}_u1"))?);
            let u2 = b.var(g, pool, self.id(&format!("{base}_u2"))?);
            Ok(WeightVar::Shared { u1, u2 })
        } else {
            Ok(WeightVar::Dense(b.var(g, pool, self.id(base)?)))
        }
    }

    pub fn param_ids(&self) -> Vec<usize> {
        self.matrices.iter().map(|&(_, i)| i).collect()
    }
}

/// A composed stack of modules referencing a parameter pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub target: PEProperty,
    /// Alternating attention and feed-forward modules.
    pub layers: Vec<LayerRef>,
    /// Final linear map to the output width, without activation.
    pub projection: LayerRef,
    pub head: HeadKind,
    pub io: IoSizes,
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Additive fixed sinusoids on the input, only for non-equivariant
    /// targets.
    pub positional: bool,
    /// Module family name to parameter pool id.
    pub sharing: BTreeMap<String, u64>,
}

fn shared_names(base: &str) -> [String; 2] {
    [format!("{base}_u1"), format!("{base}_u2")]
}

fn create(
    pool: &mut ParamPool,
    kind: ModuleKind,
    pool_name: &str,
    layer: usize,
    local: &str,
    shape: [usize; 2],
    std: f64,
    off: f64,
    out: &mut Vec<(String, usize)>,
) -> Result<()> {
    if kind.is_shared() {
        let [n1, n2] = shared_names(local);
        let i1 = pool.get_or_create(&format!("{pool_name}.{layer}.{n1}"), &shape, std)?;
        let i2 = pool.get_or_create(&format!("{pool_name}.{layer}.{n2}"), &shape, std * off)?;
        out.push((n1, i1));
        out.push((n2, i2));
    } else {
        let i = pool.get_or_create(&format!("{pool_name}.{layer}.{local}"), &shape, std)?;
        out.push((local.to_string(), i));
    }
    Ok(())
}

fn build_attention(
    pool: &mut ParamPool,
    kind: ModuleKind,
    layer: usize,
    width: usize,
    opts: &ComposeOptions,
) -> Result<LayerRef> {
    let std = opts.init.attention / width as f64;
    let off = opts.init.off_diagonal;
    let mut m = Vec::new();
    let shape = [width, width];
    match kind {
        ModuleKind::Att | ModuleKind::AttPs => {
            if kind == ModuleKind::AttPs && opts.reuse_global_branch {
                // Stored under the nested attention's global-branch names so
                // that a pool holding both instantiates them once.
                for (local, src) in [("key", "key_global"), ("value", "value_global")] {
                    let [n1, n2] = shared_names(src);
                    let i1 = pool.get_or_create(&format!("natt_ps.{layer}.{n1}"), &shape, std)?;
                    let i2 = pool.get_or_create(&format!("natt_ps.{layer}.{n2}"), &shape, std * off)?;
                    m.push((format!("{local}_u1"), i1));
                    m.push((format!("{local}_u2"), i2));
                }
            } else {
                for local in ["key", "value"] {
                    create(pool, kind, kind.name(), layer, local, shape, std, off, &mut m)?;
                }
            }
        }
        ModuleKind::Natt | ModuleKind::NattPs => {
            for local in ["key_local", "value_local", "key_global", "value_global"] {
                create(pool, kind, kind.name(), layer, local, shape, std, off, &mut m)?;
            }
        }
        other => return invalid(format!("{} is not an attention module", other.name())),
    }
    Ok(LayerRef {
        kind,
        layer,
        j_in: width,
        j_out: width,
        matrices: m,
    })
}

fn build_linear(
    pool: &mut ParamPool,
    kind: ModuleKind,
    family: &str,
    layer: usize,
    j_in: usize,
    j_out: usize,
    opts: &ComposeOptions,
) -> Result<LayerRef> {
    let std = opts.init.feed_forward / (j_in as f64).sqrt();
    let mut m = Vec::new();
    create(pool, kind, family, layer, "weight", [j_out, j_in], std, opts.init.off_diagonal, &mut m)?;
    Ok(LayerRef {
        kind,
        layer,
        j_in,
        j_out,
        matrices: m,
    })
}

/// Builds the stack for `target`, creating (or reusing, by name) its
/// parameters in `pool`.
pub fn compose(
    target: PEProperty,
    io: IoSizes,
    widths: &[usize],
    pool: &mut ParamPool,
    opts: &ComposeOptions,
) -> Result<ModelGraph> {
    if widths.is_empty() {
        return invalid("a model needs at least one layer");
    }
    if io.input == 0 || io.output == 0 || widths.contains(&0) {
        return invalid("widths must be positive");
    }
    let (att, ffn, head) = composition_rule(target);
    let mut layers = Vec::with_capacity(2 * widths.len());
    let mut j_in = io.input;
    for (l, &j_out) in widths.iter().enumerate() {
        layers.push(build_attention(pool, att, l, j_in, opts)?);
        layers.push(build_linear(pool, ffn, ffn.name(), l, j_in, j_out, opts)?);
        j_in = j_out;
    }
    let proj_family = if ffn.is_shared() { "linear_ps" } else { "linear" };
    let projection = build_linear(pool, ffn, proj_family, widths.len(), j_in, io.output, opts)?;
    let mut sharing = BTreeMap::new();
    for l in layers.iter().chain(std::iter::once(&projection)) {
        sharing.insert(l.kind.name().to_string(), opts.pool_id);
    }
    if head != HeadKind::None {
        sharing.insert(ModuleKind::DiagOutput.name().to_string(), opts.pool_id);
    }
    Ok(ModelGraph {
        target,
        layers,
        projection,
        head,
        io,
        widths: widths.to_vec(),
        activation: opts.activation,
        positional: target == PEProperty::NonPE,
        sharing,
    })
}

/// Composes a model in a fresh pool.
pub fn compose_new(
    target: PEProperty,
    io: IoSizes,
    widths: &[usize],
    seed: u64,
    opts: &ComposeOptions,
) -> Result<(ModelGraph, ParamPool)> {
    let mut pool = ParamPool::new(seed);
    let m = compose(target, io, widths, &mut pool, opts)?;
    Ok((m, pool))
}

/// Property and blueprint for a named policy.
pub fn select_modules(table: &PolicyTable, policy: &str, io: IoSizes, widths: &[usize]) -> Result<(PEProperty, Blueprint)> {
    let p = table.lookup(policy)?;
    let (m, pool) = compose_new(p, io, widths, 0, &ComposeOptions::default())?;
    Ok((p, m.blueprint(&pool)))
}

/// Human- and machine-readable description of a composed model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub target: String,
    pub modules: Vec<String>,
    pub widths: Vec<usize>,
    pub input: usize,
    pub output: usize,
    pub head: String,
    pub sharing: BTreeMap<String, u64>,
    pub parameters: usize,
}

impl ModelGraph {
    pub fn is_dense(&self) -> bool {
        !self.projection.kind.is_shared()
    }

    /// Pool indices used by this model, sorted and unique.
    pub fn param_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .layers
            .iter()
            .chain(std::iter::once(&self.projection))
            .flat_map(LayerRef::param_ids)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn param_count(&self, pool: &ParamPool) -> usize {
        pool.count_of(&self.param_ids())
    }

    pub fn blueprint(&self, pool: &ParamPool) -> Blueprint {
        let mut modules: Vec<String> = self
            .layers
            .iter()
            .map(|l| format!("{}.{}", l.kind.name(), l.layer))
            .collect();
        modules.push(format!(
            "{}.{}",
            if self.projection.kind.is_shared() { "linear_ps" } else { "linear" },
            self.projection.layer
        ));
        if self.head != HeadKind::None {
            modules.push(ModuleKind::DiagOutput.name().to_string());
        }
        let parameters = self.param_count(pool);
        Blueprint {
            target: self.target.label().to_string(),
            modules,
            widths: self.widths.clone(),
            input: self.io.input,
            output: self.io.output,
            head: self.head.name().to_string(),
            sharing: self.sharing.clone(),
            parameters,
        }
    }

    /// Runs the stack on `x` of shape `[G, T, N, J0]` and applies the head
    /// mask. Dense stacks see each token as one block of width `N·J0` and
    /// their output is split back into `N` blocks.
    ///
    /// `reps` is the number of consecutive groups that form one batch entry;
    /// block heads compare the group index modulo `reps` with the token's
    /// subset.
    pub fn forward(
        &self,
        g: &mut Graph,
        pool: &ParamPool,
        binder: &mut Binder,
        x: Var,
        tokens: &SetStructure,
        reps: usize,
    ) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let [gg, t, n, j0] = match shape[..] {
            [a, b, c, d] => [a, b, c, d],
            _ => return Err(CoreError::Dimension(format!("model input must be [G,T,N,J], got {shape:?}"))),
        };
        if tokens.len() != t {
            return Err(CoreError::Dimension(format!("{t} tokens, structure has {}", tokens.len())));
        }
        let dense = self.is_dense();
        let mut h = if dense { g.reshape(x, &[gg, t, 1, n * j0])? } else { x };
        let width = if dense { n * j0 } else { j0 };
        if width != self.io.input {
            return Err(CoreError::Dimension(format!(
                "model expects input width {}, got {width}",
                self.io.input
            )));
        }
        if self.positional {
            let pe = positional_encoding(gg, t, n * j0);
            let pe = g.constant(pe.reshaped(&g.shape(h).to_vec())?);
            h = g.add(h, pe)?;
        }
        let mask = if self.layers.iter().any(|l| matches!(l.kind, ModuleKind::Natt | ModuleKind::NattPs)) {
            Some(token_mask(g, gg, tokens)?)
        } else {
            None
        };
        for pair in self.layers.chunks(2) {
            let (a, f) = (&pair[0], &pair[1]);
            let c = match a.kind {
                ModuleKind::Att | ModuleKind::AttPs => {
                    let k = a.weight(g, pool, binder, "key")?;
                    let v = a.weight(g, pool, binder, "value")?;
                    attention(g, h, k, v, None)?
                }
                ModuleKind::Natt | ModuleKind::NattPs => {
                    let lk = a.weight(g, pool, binder, "key_local")?;
                    let lv = a.weight(g, pool, binder, "value_local")?;
                    let gk = a.weight(g, pool, binder, "key_global")?;
                    let gv = a.weight(g, pool, binder, "value_global")?;
                    nested_attention(g, h, (lk, lv), (gk, gv), mask.expect("mask built for nested layers"))?
                }
                other => return invalid(format!("{} in attention position", other.name())),
            };
            let w = f.weight(g, pool, binder, "weight")?;
            h = feed_forward(g, h, c, w, self.activation)?;
        }
        let w = self.projection.weight(g, pool, binder, "weight")?;
        let mut y = linear(g, h, w)?;
        if dense {
            let out = self.io.output;
            if out % n != 0 {
                return Err(CoreError::Dimension(format!("output width {out} does not split into {n} blocks")));
            }
            y = g.reshape(y, &[gg, t, n, out / n])?;
        }
        apply_head(g, y, self.head, tokens, reps)
    }
}

/// Multiplies `y` of shape `[G, T, N, J]` by the head's 0/1 mask.
pub fn apply_head(g: &mut Graph, y: Var, head: HeadKind, tokens: &SetStructure, reps: usize) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let [gg, t, n, j] = match shape[..] {
        [a, b, c, d] => [a, b, c, d],
        _ => return Err(CoreError::Dimension(format!("head input {shape:?}"))),
    };
    let subset_of: Vec<(usize, usize)> = {
        let mut v = Vec::with_capacity(t);
        for (s, &size) in tokens.subset_sizes().iter().enumerate() {
            for e in 0..size {
                v.push((s, e));
            }
        }
        v
    };
    let keep: Box<dyn Fn(usize, usize, usize) -> bool> = match head {
        HeadKind::None | HeadKind::Duality => return Ok(y),
        HeadKind::Diag => {
            if n != t {
                return Err(CoreError::Dimension(format!("diagonal head needs as many blocks as tokens, got {n} and {t}")));
            }
            Box::new(|_, tt, nn| tt == nn)
        }
        HeadKind::BlockDiag => {
            if reps == 0 || gg % reps != 0 || tokens.subset_sizes().len() != reps {
                return Err(CoreError::Dimension(format!(
                    "block head needs one representation per subset, got {reps} and {}",
                    tokens.subset_sizes().len()
                )));
            }
            let s = subset_of.clone();
            Box::new(move |gi, tt, _| s[tt].0 == gi % reps)
        }
        HeadKind::DoubleDiag => {
            if reps == 0 || gg % reps != 0 || tokens.subset_sizes().len() != reps {
                return Err(CoreError::Dimension(format!(
                    "block head needs one representation per subset, got {reps} and {}",
                    tokens.subset_sizes().len()
                )));
            }
            if tokens.subset_sizes().iter().any(|&s| s != n) {
                return Err(CoreError::Dimension("double-diagonal head needs subsets as large as the block count".into()));
            }
            let s = subset_of.clone();
            Box::new(move |gi, tt, nn| s[tt].0 == gi % reps && s[tt].1 == nn)
        }
    };
    let mut data = Vec::with_capacity(gg * t * n * j);
    for gi in 0..gg {
        for tt in 0..t {
            for nn in 0..n {
                let v = if keep(gi, tt, nn) { 1.0 } else { 0.0 };
                data.extend(std::iter::repeat(v).take(j));
            }
        }
    }
    let m = g.constant(Tensor::new(shape, data)?);
    Ok(g.mul(y, m)?)
}

/// Fixed sinusoidal position code `[G, T, W]` flattened, added to the input
/// of non-equivariant models.
pub fn positional_encoding(groups: usize, tokens: usize, width: usize) -> Tensor {
    let mut one = Vec::with_capacity(tokens * width);
    for t in 0..tokens {
        for w in 0..width {
            let freq = 1.0 / 10000f64.powf((w / 2 * 2) as f64 / width as f64);
            let a = t as f64 * freq;
            one.push(if w % 2 == 0 { a.sin() } else { a.cos() });
        }
    }
    let data: Vec<f64> = (0..groups).flat_map(|_| one.iter().copied()).collect();
    Tensor::new(vec![groups * tokens * width], data).expect("consistent sizes")
}

/// Several task models sharing one parameter pool.
#[derive(Clone, Debug)]
pub struct MoFormer {
    pub pool: ParamPool,
    pub graphs: BTreeMap<String, ModelGraph>,
}

impl MoFormer {
    /// Composes a model per `(task name, property, io)` in one pool. Tasks
    /// with the same property and sizes share every parameter.
    pub fn build(
        tasks: &[(String, PEProperty, IoSizes)],
        widths: &[usize],
        seed: u64,
        opts: &ComposeOptions,
    ) -> Result<Self> {
        let mut pool = ParamPool::new(seed);
        let mut graphs = BTreeMap::new();
        for (name, p, io) in tasks {
            let m = compose(*p, *io, widths, &mut pool, opts)?;
            graphs.insert(name.clone(), m);
        }
        Ok(MoFormer { pool, graphs })
    }

    pub fn graph(&self, task: &str) -> Result<&ModelGraph> {
        self.graphs.get(task).ok_or_else(|| CoreError::Unknown {
            kind: "task",
            name: task.to_string(),
            known: self.graphs.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn param_count(&self) -> usize {
        self.pool.param_count()
    }
}
