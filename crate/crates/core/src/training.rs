//! Losses, single-task and joint training, fine-tuning, and the metrics
//! reported on held-out sets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use pemo_tensor::{adam_step_subset, AdamState, Graph, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{wmmse, WmmseConfig};
use crate::complex::ComplexMatrix;
use crate::composer::{ComposeOptions, MoFormer, PolicyTable};
use crate::error::{invalid, CoreError, Result};
use crate::pe_modules::Binder;
use crate::wireless::{
    build_tokens, estimation_mse, precoders_from_output, sample_instance, se_objective, task_loss_var, token_structure,
    ChannelConfig, ChannelModel, ProblemInstance, Sizes, TaskKind,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tasks: Vec<TaskKind>,
    pub samples_per_task: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Hidden widths, one per layer.
    pub widths: Vec<usize>,
    pub seed: u64,
    /// Per-task loss weights in `tasks` order. `None` uses the reciprocal of
    /// each task's initial loss magnitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tasks: vec![TaskKind::MuMiso],
            samples_per_task: 100,
            batch_size: 32,
            epochs: 100,
            learning_rate: 0.002,
            widths: vec![32, 32, 32],
            seed: 0,
            loss_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn layers(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return invalid("no tasks to train");
        }
        if self.batch_size == 0 {
            return invalid("batch size must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return invalid("learning rate must be positive");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return invalid("widths must be non-empty and positive");
        }
        let unique: BTreeSet<_> = self.tasks.iter().collect();
        if unique.len() != self.tasks.len() {
            return invalid("tasks are listed more than once");
        }
        if let Some(w) = &self.loss_weights {
            if w.len() != self.tasks.len() {
                return invalid(format!("{} loss weights for {} tasks", w.len(), self.tasks.len()));
            }
            if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return invalid("loss weights must be positive");
            }
        }
        Ok(())
    }
}

/// Training instances per task. A task may mix sizes; batches never do.
pub type TaskData = BTreeMap<TaskKind, Vec<ProblemInstance>>;

/// One model per task in a shared pool, each composed from the policy
/// table row of its task. Tasks with equal composition share every
/// parameter.
pub fn build_model(specs: &[(TaskKind, Sizes)], widths: &[usize], seed: u64, opts: &ComposeOptions) -> Result<MoFormer> {
    let table = PolicyTable::default();
    let mut tasks: Vec<(String, _, _)> = Vec::with_capacity(specs.len());
    for (task, sizes) in specs {
        let io = task.io_sizes(sizes);
        if let Some((_, _, prev)) = tasks.iter().find(|(n, _, _)| n == task.tag()) {
            if *prev != io {
                return invalid(format!("{task} is listed with incompatible sizes"));
            }
            continue;
        }
        tasks.push((task.tag().to_string(), table.lookup(task.policy())?, io));
    }
    MoFormer::build(&tasks, widths, seed, opts)
}

fn batch_task(instances: &[ProblemInstance]) -> Result<(TaskKind, Sizes)> {
    let first = instances.first().ok_or_else(|| CoreError::Invalid("empty batch".into()))?;
    if instances.iter().any(|i| i.task != first.task || i.sizes != first.sizes) {
        return invalid("a batch must hold one task at one size");
    }
    Ok((first.task, first.sizes))
}

/// Records the task model's output for a homogeneous batch.
pub fn model_output(g: &mut Graph, mo: &MoFormer, binder: &mut Binder, instances: &[ProblemInstance]) -> Result<Var> {
    let (task, sizes) = batch_task(instances)?;
    let model = mo.graph(task.tag())?;
    let tokens = build_tokens(instances)?;
    let x = g.constant(tokens.data);
    model.forward(g, &mo.pool, binder, x, &token_structure(task, &sizes), task.reps(&sizes))
}

/// Training loss of a homogeneous batch: negative mean sum rate, or the
/// mean squared error for estimation.
pub fn loss(g: &mut Graph, mo: &MoFormer, binder: &mut Binder, instances: &[ProblemInstance]) -> Result<Var> {
    let out = model_output(g, mo, binder, instances)?;
    task_loss_var(g, instances, out)
}

/// Loss value without keeping the tape.
pub fn loss_value(mo: &MoFormer, instances: &[ProblemInstance]) -> Result<f64> {
    let mut g = Graph::new();
    let mut binder = Binder::new(&mo.pool);
    let l = loss(&mut g, mo, &mut binder, instances)?;
    Ok(g.item(l))
}

/// Loss and its tape gradient for every pool parameter the batch touches.
pub fn loss_gradients(mo: &MoFormer, instances: &[ProblemInstance]) -> Result<(f64, Vec<(usize, Vec<f64>)>)> {
    let mut g = Graph::new();
    let mut binder = Binder::new(&mo.pool);
    let l = loss(&mut g, mo, &mut binder, instances)?;
    g.backward(l)?;
    let grads = binder
        .bound()
        .into_iter()
        .map(|(id, v)| {
            let grad = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; mo.pool.tensor(id).numel()]);
            (id, grad)
        })
        .collect();
    Ok((g.item(l), grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub numel: usize,
    /// `max |tape - numeric|` over the tensor.
    pub max_abs_error: f64,
    /// `max_abs_error / max |numeric|`.
    pub relative_error: f64,
    pub max_abs_gradient: f64,
}

/// Compares the tape gradient of the batch loss with fourth-order central
/// differences for every coordinate of every parameter the batch touches.
pub fn gradient_check(mo: &MoFormer, instances: &[ProblemInstance], step: f64) -> Result<Vec<GradCheck>> {
    let (_, grads) = loss_gradients(mo, instances)?;
    let mut probe = mo.clone();
    let mut out = Vec::with_capacity(grads.len());
    for (id, tape) in grads {
        let mut worst_diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (i, &a) in tape.iter().enumerate() {
            let orig = probe.pool.tensors()[id].data()[i];
            let mut at = |offset: f64| -> Result<f64> {
                probe.pool.tensors_mut()[id].data_mut()[i] = orig + offset;
                loss_value(&probe, instances)
            };
            let (p1, m1, p2, m2) = (at(step)?, at(-step)?, at(2.0 * step)?, at(-2.0 * step)?);
            probe.pool.tensors_mut()[id].data_mut()[i] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
            worst_diff = worst_diff.max((a - numeric).abs());
            scale = scale.max(numeric.abs());
        }
        out.push(GradCheck {
            name: mo.pool.name(id).to_string(),
            numel: tape.len(),
            max_abs_error: worst_diff,
            relative_error: if scale > 0.0 { worst_diff / scale } else { worst_diff },
            max_abs_gradient: scale,
        });
    }
    Ok(out)
}

fn size_key(s: &Sizes) -> (usize, usize, usize, usize, usize) {
    (s.m, s.k, s.n_t, s.n_r, s.n_rb)
}

/// Consecutive chunks of at most `max` instances sharing task and size, in
/// first-appearance order of the sizes.
fn homogeneous_chunks(instances: &[ProblemInstance], max: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<((TaskKind, (usize, usize, usize, usize, usize)), Vec<usize>)> = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let key = (inst.task, size_key(&inst.sizes));
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    groups
        .into_iter()
        .flat_map(|(_, idx)| idx.chunks(max.max(1)).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect()
}

fn shuffled_batches(instances: &[ProblemInstance], batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut by_size: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_size.entry(size_key(&inst.sizes)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (_, mut idx) in by_size {
        idx.shuffle(rng);
        out.extend(idx.chunks(batch).map(<[usize]>::to_vec));
    }
    out.shuffle(rng);
    out
}

fn pick(instances: &[ProblemInstance], idx: &[usize]) -> Vec<ProblemInstance> {
    idx.iter().map(|&i| instances[i].clone()).collect()
}

/// Mean loss over a whole set, evaluated in homogeneous chunks.
pub fn mean_loss(mo: &MoFormer, instances: &[ProblemInstance], chunk: usize) -> Result<f64> {
    let mut total = 0.0;
    for idx in homogeneous_chunks(instances, chunk) {
        total += loss_value(mo, &pick(instances, &idx))? * idx.len() as f64;
    }
    Ok(total / instances.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub task: TaskKind,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Epoch 0 holds the loss before training; later epochs the mean batch
    /// loss seen during that epoch.
    pub trace: Vec<TraceRow>,
    pub loss_weights: Vec<f64>,
    pub steps: u64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,task,loss\n");
        for r in &self.trace {
            let _ = writeln!(s, "{},{},{:e}", r.epoch, r.task, r.loss);
        }
        s
    }

    pub fn losses(&self, task: TaskKind) -> Vec<f64> {
        self.trace.iter().filter(|r| r.task == task).map(|r| r.loss).collect()
    }
}

/// Adam training on every task of `cfg`. Joint training cycles the tasks in
/// `cfg` order, one homogeneous batch each, until every task has used its
/// epoch's batches. Only parameters a batch's model touches are updated.
pub fn train(mo: &mut MoFormer, data: &TaskData, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(mo, data, cfg, |_, _| Ok(()))
}

/// [`train`] calling `on_epoch(epoch, model)` before the first update
/// (epoch 0) and after every epoch.
pub fn train_with<F>(mo: &mut MoFormer, data: &TaskData, cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainReport>
where
    F: FnMut(usize, &MoFormer) -> Result<()>,
{
    cfg.validate()?;
    for t in &cfg.tasks {
        match data.get(t) {
            Some(v) if !v.is_empty() => {
                if v.iter().any(|i| i.task != *t) {
                    return invalid(format!("data for {t} holds instances of another task"));
                }
            }
            _ => return invalid(format!("no training data for {t}")),
        }
        mo.graph(t.tag())?;
    }
    let mut trace = Vec::new();
    let mut initial = Vec::with_capacity(cfg.tasks.len());
    for t in &cfg.tasks {
        let l = mean_loss(mo, &data[t], cfg.batch_size)?;
        if !l.is_finite() {
            return Err(CoreError::NonFinite(format!("initial loss of {t} is {l}")));
        }
        initial.push(l);
        trace.push(TraceRow { epoch: 0, task: *t, loss: l });
    }
    let weights = match &cfg.loss_weights {
        Some(w) => w.clone(),
        None => initial.iter().map(|l| if l.abs() > 0.0 { 1.0 / l.abs() } else { 1.0 }).collect(),
    };
    on_epoch(0, mo)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.learning_rate);
    for epoch in 1..=cfg.epochs {
        let mut queues: Vec<VecDeque<Vec<usize>>> = cfg
            .tasks
            .iter()
            .map(|t| shuffled_batches(&data[t], cfg.batch_size, &mut rng).into())
            .collect();
        let mut sums = vec![0.0; cfg.tasks.len()];
        let mut counts = vec![0usize; cfg.tasks.len()];
        while queues.iter().any(|q| !q.is_empty()) {
            for (ti, task) in cfg.tasks.iter().enumerate() {
                let Some(idx) = queues[ti].pop_front() else { continue };
                let batch = pick(&data[task], &idx);
                let mut g = Graph::new();
                let mut binder = Binder::new(&mo.pool);
                let l = loss(&mut g, mo, &mut binder, &batch)?;
                let value = g.item(l);
                if !value.is_finite() {
                    return Err(CoreError::NonFinite(format!(
                        "loss {value} at epoch {epoch}, task {task}, step {}, batch seeds {:?}",
                        adam.step,
                        batch.iter().map(|b| b.seed).collect::<Vec<_>>()
                    )));
                }
                let weighted = g.scale(l, weights[ti]);
                g.backward(weighted)?;
                let bound = binder.bound();
                let params = mo.pool.tensors_mut();
                for &(id, v) in &bound {
                    g.accumulate_into(v, &mut params[id])?;
                }
                let active: Vec<usize> = bound.iter().map(|&(id, _)| id).collect();
                adam_step_subset(params, &active, &mut adam)?;
                sums[ti] += value * batch.len() as f64;
                counts[ti] += batch.len();
            }
        }
        for (ti, t) in cfg.tasks.iter().enumerate() {
            trace.push(TraceRow {
                epoch,
                task: *t,
                loss: sums[ti] / counts[ti].max(1) as f64,
            });
        }
        on_epoch(epoch, mo)?;
    }
    Ok(TrainReport {
        trace,
        loss_weights: weights,
        steps: adam.step,
    })
}

/// Model decisions in instance layout: feasible precoders for precoding
/// tasks, channel estimates (`N_t x K`) for estimation.
pub fn predict(mo: &MoFormer, instances: &[ProblemInstance]) -> Result<Vec<ComplexMatrix>> {
    let mut out: Vec<Option<ComplexMatrix>> = vec![None; instances.len()];
    for idx in homogeneous_chunks(instances, 64) {
        let batch = pick(instances, &idx);
        let mut g = Graph::new();
        let mut binder = Binder::new(&mo.pool);
        let y = model_output(&mut g, mo, &mut binder, &batch)?;
        let t = g.value(y).clone();
        let mats = if batch[0].task == TaskKind::Estimation {
            let s = batch[0].sizes;
            let d = t.data();
            (0..batch.len())
                .map(|b| {
                    ComplexMatrix::from_fn(s.n_t, s.k, |n, k| {
                        let i = ((b * s.k + k) * s.n_t + n) * 2;
                        Complex64::new(d[i], d[i + 1])
                    })
                })
                .collect()
        } else {
            precoders_from_output(&batch, &t)?
        };
        for (&i, m) in idx.iter().zip(mats) {
            out[i] = Some(m);
        }
    }
    Ok(out.into_iter().map(|m| m.expect("every instance predicted")).collect())
}

/// Exact sum rate of the model's precoders on every instance.
pub fn model_se(mo: &MoFormer, instances: &[ProblemInstance]) -> Result<Vec<f64>> {
    let v = predict(mo, instances)?;
    instances.iter().zip(&v).map(|(i, v)| se_objective(i, v, false)).collect()
}

fn hash_words(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for w in words {
        for b in w.to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// WMMSE sum rates keyed by instance content.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleCache {
    pub values: BTreeMap<u64, f64>,
}

impl OracleCache {
    pub fn key(inst: &ProblemInstance) -> u64 {
        let s = inst.sizes;
        let head = [
            inst.task as u64,
            s.m as u64,
            s.k as u64,
            s.n_t as u64,
            s.n_r as u64,
            s.n_rb as u64,
            inst.sigma2.to_bits(),
            inst.p_t.to_bits(),
        ];
        let body = inst.h.re.data().iter().chain(inst.h.im.data()).map(|x| x.to_bits());
        hash_words(head.into_iter().chain(body))
    }

    pub fn get(&self, inst: &ProblemInstance) -> Option<f64> {
        self.values.get(&Self::key(inst)).copied()
    }

    pub fn insert(&mut self, inst: &ProblemInstance, se: f64) {
        self.values.insert(Self::key(inst), se);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Runs WMMSE on every instance without a cached value, spread over up
    /// to `threads` threads.
    pub fn fill(&mut self, instances: &[ProblemInstance], cfg: &WmmseConfig, threads: usize) -> Result<()> {
        let missing: Vec<&ProblemInstance> = instances.iter().filter(|i| self.get(i).is_none()).collect();
        if missing.is_empty() {
            return Ok(());
        }
        let threads = threads.clamp(1, missing.len());
        let per = missing.len().div_ceil(threads);
        let results: Vec<Result<Vec<f64>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = missing
                .chunks(per)
                .map(|chunk| scope.spawn(move || chunk.iter().map(|i| wmmse(i, cfg).map(|r| r.se)).collect()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("oracle worker panicked")).collect()
        });
        for (chunk, r) in missing.chunks(per).zip(results) {
            for (inst, se) in chunk.iter().zip(r?) {
                self.insert(inst, se);
            }
        }
        Ok(())
    }

    fn oracle_values(&self, instances: &[ProblemInstance]) -> Result<Vec<f64>> {
        instances
            .iter()
            .map(|i| {
                self.get(i)
                    .ok_or_else(|| CoreError::MissingOracle(format!("{} instance with seed {}", i.task, i.seed)))
            })
            .collect()
    }
}

/// Ratio of mean policy sum rate to mean WMMSE sum rate.
pub fn se_ratio_of(instances: &[ProblemInstance], policy_se: &[f64], cache: &OracleCache) -> Result<f64> {
    if instances.is_empty() || instances.len() != policy_se.len() {
        return invalid("need one policy value per instance");
    }
    let oracle = cache.oracle_values(instances)?;
    let den: f64 = oracle.iter().sum();
    if !(den > 0.0) {
        return invalid("oracle sum rate is not positive");
    }
    Ok(policy_se.iter().sum::<f64>() / den)
}

/// SE ratio of fixed precoders (a baseline standing in for a model).
pub fn se_ratio_of_precoders(instances: &[ProblemInstance], v: &[ComplexMatrix], cache: &OracleCache) -> Result<f64> {
    let se: Vec<f64> = instances
        .iter()
        .zip(v)
        .map(|(i, v)| se_objective(i, v, false))
        .collect::<Result<_>>()?;
    se_ratio_of(instances, &se, cache)
}

pub fn se_ratio(mo: &MoFormer, instances: &[ProblemInstance], cache: &OracleCache) -> Result<f64> {
    let se = model_se(mo, instances)?;
    se_ratio_of(instances, &se, cache)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SeRatio,
    Mse,
}

impl Metric {
    pub fn for_task(task: TaskKind) -> Metric {
        if task.is_precoding() {
            Metric::SeRatio
        } else {
            Metric::Mse
        }
    }
}

/// SE ratio for precoding tasks, mean squared error for estimation.
pub fn metric(mo: &MoFormer, instances: &[ProblemInstance], cache: &OracleCache) -> Result<f64> {
    let (task, _) = match instances.first() {
        Some(i) => (i.task, i.sizes),
        None => return invalid("empty evaluation set"),
    };
    match Metric::for_task(task) {
        Metric::SeRatio => se_ratio(mo, instances, cache),
        Metric::Mse => estimation_mse(instances, &predict(mo, instances)?),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeBreakdown {
    pub sizes: Sizes,
    pub count: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub metric: Metric,
    pub value: f64,
    pub per_size: Vec<SizeBreakdown>,
    pub param_count: usize,
    pub wall_clock_s: f64,
    pub config: serde_json::Value,
    pub seed: u64,
}

impl EvalReport {
    /// Aligned-column text form.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task       {}", self.task);
        let _ = writeln!(s, "metric     {:?}", self.metric);
        let _ = writeln!(s, "value      {:.6}", self.value);
        let _ = writeln!(s, "parameters {}", self.param_count);
        let _ = writeln!(s, "seed       {}", self.seed);
        let _ = writeln!(s, "{:>4} {:>4} {:>4} {:>4} {:>5} {:>7} {:>10}", "M", "K", "N_t", "N_r", "n_rb", "count", "value");
        for b in &self.per_size {
            let z = b.sizes;
            let _ = writeln!(
                s,
                "{:>4} {:>4} {:>4} {:>4} {:>5} {:>7} {:>10.6}",
                z.m, z.k, z.n_t, z.n_r, z.n_rb, b.count, b.value
            );
        }
        s
    }
}

/// Evaluates one task's model on `instances`, overall and per size.
pub fn evaluate(
    mo: &MoFormer,
    instances: &[ProblemInstance],
    cache: &OracleCache,
    config: serde_json::Value,
    seed: u64,
) -> Result<EvalReport> {
    let start = Instant::now();
    let task = match instances.first() {
        Some(i) => i.task,
        None => return invalid("empty evaluation set"),
    };
    if instances.iter().any(|i| i.task != task) {
        return invalid("evaluation set mixes tasks");
    }
    let value = metric(mo, instances, cache)?;
    let mut by_size: BTreeMap<_, Vec<ProblemInstance>> = BTreeMap::new();
    for i in instances {
        by_size.entry(size_key(&i.sizes)).or_default().push(i.clone());
    }
    let mut per_size = Vec::with_capacity(by_size.len());
    for set in by_size.values() {
        per_size.push(SizeBreakdown {
            sizes: set[0].sizes,
            count: set.len(),
            value: metric(mo, set, cache)?,
        });
    }
    Ok(EvalReport {
        task,
        metric: Metric::for_task(task),
        value,
        per_size,
        param_count: mo.graph(task.tag())?.param_count(&mo.pool),
        wall_clock_s: start.elapsed().as_secs_f64(),
        config,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenAxis {
    NT,
    K,
    NR,
    M,
    Snr,
    ChannelModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Size(usize),
    Snr(f64),
    Channel(ChannelModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenPoint {
    pub sizes: Sizes,
    pub channel: ChannelConfig,
    pub value: f64,
    /// Relative loss against the in-distribution value: drop of the SE
    /// ratio, or growth of the mean squared error.
    pub degradation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub task: TaskKind,
    pub axis: GenAxis,
    pub in_distribution: f64,
    pub param_count: usize,
    pub points: Vec<GenPoint>,
}

/// Settings shared by evaluations that generate fresh test sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSetup {
    pub n_test: usize,
    pub seed: u64,
    pub wmmse: WmmseConfig,
    pub threads: usize,
}

/// `n` instances with seeds `seed, seed + 1, ...`.
pub fn generate_set(task: TaskKind, cfg: &ChannelConfig, sizes: &Sizes, n: usize, seed: u64) -> Result<Vec<ProblemInstance>> {
    (0..n as u64).map(|i| sample_instance(task, cfg, sizes, seed.wrapping_add(i))).collect()
}

fn grid_point(task: TaskKind, dense: bool, axis: GenAxis, v: &AxisValue, sizes: &Sizes, cfg: &ChannelConfig) -> Result<(Sizes, ChannelConfig)> {
    let mut s = *sizes;
    let mut c = cfg.clone();
    match (axis, v) {
        (GenAxis::NT, AxisValue::Size(n)) => {
            if dense {
                return Err(CoreError::Unsupported(format!(
                    "the {task} model has dense widths fixed by N_t and cannot change antenna count"
                )));
            }
            s.n_t = *n;
        }
        (GenAxis::K, AxisValue::Size(n)) => s.k = *n,
        (GenAxis::NR, AxisValue::Size(n)) => {
            if task != TaskKind::MuMimo {
                return Err(CoreError::Unsupported(format!("{task} has no receive-antenna axis")));
            }
            s.n_r = *n;
        }
        (GenAxis::M, AxisValue::Size(n)) => {
            if !matches!(task, TaskKind::CoordinatedBeamforming | TaskKind::PowerAllocation) {
                return Err(CoreError::Unsupported(format!("{task} has no cell axis")));
            }
            s.m = *n;
        }
        (GenAxis::Snr, AxisValue::Snr(db)) => c.snr_db = *db,
        (GenAxis::Snr, AxisValue::Size(db)) => c.snr_db = *db as f64,
        (GenAxis::ChannelModel, AxisValue::Channel(m)) => c.model = m.clone(),
        _ => return invalid(format!("value {v:?} does not fit axis {axis:?}")),
    }
    s.validate()?;
    c.validate()?;
    Ok((s, c))
}

/// Evaluates a trained model, unchanged, on fresh test sets along one axis.
#[allow(clippy::too_many_arguments)]
pub fn generalization_eval(
    mo: &MoFormer,
    task: TaskKind,
    base: (&Sizes, &ChannelConfig),
    in_distribution: f64,
    axis: GenAxis,
    grid: &[AxisValue],
    setup: &EvalSetup,
    cache: &mut OracleCache,
) -> Result<GeneralizationReport> {
    let model = mo.graph(task.tag())?;
    let dense = model.is_dense();
    let mut points = Vec::with_capacity(grid.len());
    for v in grid {
        let (s, c) = grid_point(task, dense, axis, v, base.0, base.1)?;
        let test = generate_set(task, &c, &s, setup.n_test, setup.seed)?;
        if task.is_precoding() {
            cache.fill(&test, &setup.wmmse, setup.threads)?;
        }
        let value = metric(mo, &test, cache)?;
        let degradation = match Metric::for_task(task) {
            Metric::SeRatio => (in_distribution - value) / in_distribution,
            Metric::Mse => (value - in_distribution) / in_distribution,
        };
        points.push(GenPoint {
            sizes: s,
            channel: c,
            value,
            degradation,
        });
    }
    Ok(GeneralizationReport {
        task,
        axis,
        in_distribution,
        param_count: model.param_count(&mo.pool),
        points,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineTuneReport {
    /// Held-out metric before training (index 0) and after each epoch.
    pub curve: Vec<f64>,
    pub epochs_to_threshold: Option<usize>,
    pub train: TrainReport,
}

/// First epoch whose SE ratio reaches `threshold`.
pub fn epochs_to_threshold(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&r| r >= threshold)
}

/// Trains `task` alone while recording its held-out SE ratio every epoch.
pub fn train_tracked(
    mo: &mut MoFormer,
    task: TaskKind,
    data: &[ProblemInstance],
    cfg: &TrainConfig,
    test: &[ProblemInstance],
    cache: &OracleCache,
    threshold: f64,
) -> Result<FineTuneReport> {
    let mut td = TaskData::new();
    td.insert(task, data.to_vec());
    let mut cfg = cfg.clone();
    cfg.tasks = vec![task];
    cfg.loss_weights = None;
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    let train = train_with(mo, &td, &cfg, |_, m| {
        curve.push(se_ratio(m, test, cache)?);
        Ok(())
    })?;
    Ok(FineTuneReport {
        epochs_to_threshold: epochs_to_threshold(&curve, threshold),
        curve,
        train,
    })
}

/// Fine-tunes `task` on a pool pre-trained on `pretrained`. Every module
/// the task needs must already belong to a pre-trained task; parameters
/// outside the task's model are left untouched.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune(
    mo: &mut MoFormer,
    pretrained: &[TaskKind],
    task: TaskKind,
    data: &[ProblemInstance],
    cfg: &TrainConfig,
    test: &[ProblemInstance],
    cache: &OracleCache,
    threshold: f64,
) -> Result<FineTuneReport> {
    let mut known = BTreeSet::new();
    for t in pretrained {
        known.extend(mo.graph(t.tag())?.param_ids());
    }
    let missing: Vec<String> = mo
        .graph(task.tag())?
        .param_ids()
        .into_iter()
        .filter(|id| !known.contains(id))
        .map(|id| mo.pool.name(id).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CoreError::MissingModule(missing.join(", ")));
    }
    train_tracked(mo, task, data, cfg, test, cache, threshold)
}
