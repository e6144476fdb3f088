//! The subcommands. Each reads its inputs from the run's output directory,
//! writes its outputs there and returns the manifest it wrote.
//!
//! Layout of an output directory:
//!
//! - `data/<task>_{train,test}.jsonl`: datasets (`generate`)
//! - `weights.pemo`, `loss.csv`: trained pool and loss trace (`train`)
//! - `metrics.csv`, `eval_report.json`: held-out evaluation (`eval`)
//! - `baseline.csv`, `wmmse_traces.csv`: baseline values (`baseline`)
//! - `verify_report.json`: equivariance checks (`verify-pe`)
//! - `oracle.json`: cached WMMSE sum rates, reused across commands
//! - `<command>.manifest.json`, `<command>.timing.json`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pemo_core::baselines::{lmmse_estimate, matched_filter, wmmse, zero_forcing, LmmseStats, WmmseConfig};
use pemo_core::complex::ComplexMatrix;
use pemo_core::composer::MoFormer;
use pemo_core::equivariance::{verify_all, VerifyReport};
use pemo_core::training::{
    build_model, evaluate, generate_set, metric, train_with, EvalReport, Metric, OracleCache, TaskData,
};
use pemo_core::wireless::{estimation_mse, read_dataset, se_objective, write_dataset, ProblemInstance, Sizes, TaskKind};
use serde::{Deserialize, Serialize};

use crate::config::{BaselineKind, RunConfig, TaskSetup};
use crate::error::{CliError, Result};
use crate::manifest::{sha256_file, write_file, RunManifest, Timing};

pub const WEIGHTS_FILE: &str = "weights.pemo";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const TRACES_FILE: &str = "wmmse_traces.csv";
pub const VERIFY_FILE: &str = "verify_report.json";
pub const ORACLE_FILE: &str = "oracle.json";

/// Seed distance between the datasets of consecutive sizes of one task.
pub const SIZE_SEED_STRIDE: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

pub fn dataset_rel(task: TaskKind, split: Split) -> String {
    format!("data/{}_{}.jsonl", task.tag(), split.name())
}

pub fn size_label(s: &Sizes) -> String {
    format!("m{}_k{}_nt{}_nr{}_nrb{}", s.m, s.k, s.n_t, s.n_r, s.n_rb)
}

/// Instances of one split, concatenated over its sizes.
pub fn generate_split(cfg: &RunConfig, setup: &TaskSetup, split: Split) -> Result<Vec<ProblemInstance>> {
    let (sizes, n, seed) = match split {
        Split::Train => (&setup.train_sizes[..], cfg.data.train_samples, cfg.data.train_seed),
        Split::Test => (setup.test_sizes(), cfg.data.test_samples, cfg.data.test_seed),
    };
    let mut out = Vec::with_capacity(n * sizes.len());
    for (i, s) in sizes.iter().enumerate() {
        out.extend(generate_set(setup.task, &setup.channel, s, n, seed.wrapping_add(i as u64 * SIZE_SEED_STRIDE))?);
    }
    Ok(out)
}

pub fn load_split(dir: &Path, task: TaskKind, split: Split) -> Result<Vec<ProblemInstance>> {
    let path = dir.join(dataset_rel(task, split));
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            path,
            producer: "generate",
        });
    }
    let f = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let data = read_dataset(BufReader::new(f))?;
    if let Some(bad) = data.iter().find(|i| i.task != task) {
        return Err(CliError::Integrity(format!("{} holds a {} instance", path.display(), bad.task)));
    }
    Ok(data)
}

/// Fails when datasets differ from what the last `generate` recorded.
fn check_generated(dir: &Path) -> Result<()> {
    let path = RunManifest::path_in(dir, "generate");
    if path.exists() {
        RunManifest::read(&path)?.verify_files(dir)?;
    }
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct OracleFile {
    wmmse: Option<WmmseConfig>,
    cache: OracleCache,
}

/// Cached oracle values, discarded when they were computed under other
/// WMMSE settings.
pub fn load_oracle(dir: &Path, cfg: &WmmseConfig) -> Result<OracleCache> {
    let path = dir.join(ORACLE_FILE);
    if !path.exists() {
        return Ok(OracleCache::default());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let file: OracleFile = serde_json::from_str(&text)?;
    Ok(if file.wmmse.as_ref() == Some(cfg) {
        file.cache
    } else {
        OracleCache::default()
    })
}

pub fn save_oracle(dir: &Path, cfg: &WmmseConfig, cache: &OracleCache) -> Result<()> {
    let file = OracleFile {
        wmmse: Some(*cfg),
        cache: cache.clone(),
    };
    write_file(&dir.join(ORACLE_FILE), serde_json::to_string(&file)?.as_bytes())
}

fn finish(manifest: &RunManifest, dir: &Path, start: Instant, stages: BTreeMap<String, f64>) -> Result<()> {
    manifest.write(dir)?;
    Timing {
        command: manifest.command.clone(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        stages,
    }
    .write(dir)?;
    Ok(())
}

fn prepared(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

/// Writes train and test datasets for every task.
pub fn generate(cfg: &RunConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let dir = prepared(cfg)?;
    let mut m = RunManifest::new("generate", cfg);
    for setup in &cfg.tasks {
        for split in [Split::Train, Split::Test] {
            let data = generate_split(cfg, setup, split)?;
            let rel = dataset_rel(setup.task, split);
            let mut buf = Vec::new();
            write_dataset(&mut buf, &data)?;
            write_file(&dir.join(&rel), &buf)?;
            m.add_dataset(&dir, &rel)?;
            m.metrics.insert(format!("{}.{}.instances", setup.task, split.name()), data.len() as f64);
        }
    }
    finish(&m, &dir, start, BTreeMap::new())?;
    Ok(m)
}

/// The pool of a run: one model per task, in the configured order.
pub fn build_pool(cfg: &RunConfig) -> Result<MoFormer> {
    let specs: Vec<(TaskKind, Sizes)> = cfg
        .tasks
        .iter()
        .flat_map(|t| t.train_sizes.iter().map(move |s| (t.task, *s)))
        .collect();
    Ok(build_model(&specs, &cfg.train.widths, cfg.train.seed, &cfg.model)?)
}

fn metric_key(task: TaskKind) -> &'static str {
    match Metric::for_task(task) {
        Metric::SeRatio => "se_ratio",
        Metric::Mse => "mse",
    }
}

fn fill_oracle(cfg: &RunConfig, cache: &mut OracleCache, data: &[ProblemInstance]) -> Result<()> {
    let precoding: Vec<ProblemInstance> = data.iter().filter(|i| i.task.is_precoding()).cloned().collect();
    cache.fill(&precoding, &cfg.wmmse, cfg.threads)?;
    Ok(())
}

/// Trains the configured pool and scores it on the test sets.
pub fn train(cfg: &RunConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let dir = prepared(cfg)?;
    check_generated(&dir)?;
    let mut m = RunManifest::new("train", cfg);
    let mut data = TaskData::new();
    let mut tests = BTreeMap::new();
    for setup in &cfg.tasks {
        data.insert(setup.task, load_split(&dir, setup.task, Split::Train)?);
        tests.insert(setup.task, load_split(&dir, setup.task, Split::Test)?);
        m.add_dataset(&dir, &dataset_rel(setup.task, Split::Train))?;
        m.add_dataset(&dir, &dataset_rel(setup.task, Split::Test))?;
    }
    let mut mo = build_pool(cfg)?;
    let mut stages = BTreeMap::new();
    let t0 = Instant::now();
    let report = train_with(&mut mo, &data, &cfg.train_config(), |_, _| Ok(()))?;
    stages.insert("train".to_string(), t0.elapsed().as_secs_f64());
    pemo_tensor::save_weights(&dir.join(WEIGHTS_FILE), &mo.pool.named_arrays())?;
    write_file(&dir.join(LOSS_FILE), report.to_csv().as_bytes())?;
    m.add_artifact(&dir, WEIGHTS_FILE)?;
    m.add_artifact(&dir, LOSS_FILE)?;

    let t0 = Instant::now();
    let mut cache = load_oracle(&dir, &cfg.wmmse)?;
    for test in tests.values() {
        fill_oracle(cfg, &mut cache, test)?;
    }
    save_oracle(&dir, &cfg.wmmse, &cache)?;
    stages.insert("oracle".to_string(), t0.elapsed().as_secs_f64());
    for (task, test) in &tests {
        let losses = report.losses(*task);
        m.metrics.insert(format!("{task}.initial_loss"), losses[0]);
        m.metrics.insert(format!("{task}.final_loss"), *losses.last().unwrap_or(&losses[0]));
        m.metrics.insert(format!("{task}.test_{}", metric_key(*task)), metric(&mo, test, &cache)?);
        let graph = mo.graph(task.tag())?;
        m.blueprints.insert(task.tag().to_string(), graph.blueprint(&mo.pool));
    }
    m.metrics.insert("steps".to_string(), report.steps as f64);
    m.param_count = Some(mo.param_count());
    finish(&m, &dir, start, stages)?;
    Ok(m)
}

/// Loads the trained pool described by a train manifest after checking
/// every file it recorded.
pub fn load_trained(manifest_path: &Path) -> Result<(RunManifest, MoFormer, PathBuf)> {
    if !manifest_path.exists() {
        return Err(CliError::MissingArtifact {
            path: manifest_path.to_path_buf(),
            producer: "train",
        });
    }
    let tm = RunManifest::read(manifest_path)?;
    if tm.command != "train" {
        return Err(CliError::Integrity(format!(
            "{} was written by `{}`, not `train`",
            manifest_path.display(),
            tm.command
        )));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    tm.verify_files(&dir)?;
    let mut mo = build_pool(&tm.config)?;
    mo.pool.load_named(&pemo_tensor::load_weights(&dir.join(WEIGHTS_FILE))?)?;
    Ok((tm, mo, dir))
}

/// Scores a trained pool on its test sets with a per-size breakdown.
pub fn eval(cfg: &RunConfig, manifest_path: Option<&Path>) -> Result<RunManifest> {
    let start = Instant::now();
    let out = prepared(cfg)?;
    let default_path = RunManifest::path_in(&out, "train");
    let mpath = manifest_path.unwrap_or(&default_path);
    let (tm, mo, dir) = load_trained(mpath)?;
    let mut m = RunManifest::new("eval", cfg);
    m.artifacts.insert(
        format!("{}:{}", mpath.display(), RunManifest::file_name("train")),
        sha256_file(mpath)?,
    );
    let mut cache = load_oracle(&dir, &cfg.wmmse)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut csv = String::from("task,sizes,metric,value\n");
    let echo = serde_json::to_value(&tm.config)?;
    for setup in &tm.config.tasks {
        let test = load_split(&dir, setup.task, Split::Test)?;
        m.datasets.insert(dataset_rel(setup.task, Split::Test), sha256_file(&dir.join(dataset_rel(setup.task, Split::Test)))?);
        fill_oracle(cfg, &mut cache, &test)?;
        let r = evaluate(&mo, &test, &cache, echo.clone(), tm.config.train.seed)?;
        let key = metric_key(setup.task);
        m.metrics.insert(format!("{}.{key}", setup.task), r.value);
        writeln!(csv, "{},all,{key},{}", setup.task, r.value).expect("writing to a string");
        for b in &r.per_size {
            let label = size_label(&b.sizes);
            m.metrics.insert(format!("{}.{key}.{label}", setup.task), b.value);
            writeln!(csv, "{},{label},{key},{}", setup.task, b.value).expect("writing to a string");
        }
        reports.push(r);
    }
    save_oracle(&dir, &cfg.wmmse, &cache)?;
    write_file(&out.join(METRICS_FILE), csv.as_bytes())?;
    write_file(&out.join(EVAL_REPORT_FILE), (serde_json::to_string_pretty(&reports)? + "\n").as_bytes())?;
    m.add_artifact(&out, METRICS_FILE)?;
    m.param_count = Some(mo.param_count());
    for (task, g) in &mo.graphs {
        m.blueprints.insert(task.clone(), g.blueprint(&mo.pool));
    }
    finish(&m, &out, start, BTreeMap::new())?;
    Ok(m)
}

/// Maps `f` over `items` on up to `threads` scoped threads, keeping order.
fn par_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let per = items.len().div_ceil(threads.clamp(1, items.len()));
    let f = &f;
    let parts: Vec<Result<Vec<U>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(per)
            .map(|chunk| scope.spawn(move || chunk.iter().map(f).collect::<Result<Vec<U>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("baseline worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Runs the configured baseline on every test set. WMMSE values also fill
/// the oracle cache.
pub fn baseline(cfg: &RunConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let dir = prepared(cfg)?;
    check_generated(&dir)?;
    let mut m = RunManifest::new("baseline", cfg);
    let mut cache = load_oracle(&dir, &cfg.wmmse)?;
    let mut rows = String::from("task,seed,sizes,baseline,value\n");
    let mut traces = String::from("task,seed,iteration,se\n");
    for setup in &cfg.tasks {
        let task = setup.task;
        let rel = dataset_rel(task, Split::Test);
        let test = load_split(&dir, task, Split::Test)?;
        m.add_dataset(&dir, &rel)?;
        if !task.is_precoding() {
            let mut estimates = Vec::with_capacity(test.len());
            for s in setup.test_sizes() {
                let stats = LmmseStats::estimate(&setup.channel, s, cfg.baseline.lmmse_draws, cfg.baseline.lmmse_seed)?;
                for inst in test.iter().filter(|i| i.sizes == *s) {
                    estimates.push((inst, lmmse_estimate(&inst.h, &stats)?));
                }
            }
            let (insts, est): (Vec<ProblemInstance>, Vec<ComplexMatrix>) =
                estimates.into_iter().map(|(i, e)| (i.clone(), e)).unzip();
            for (i, e) in insts.iter().zip(&est) {
                let mse = estimation_mse(std::slice::from_ref(i), std::slice::from_ref(e))?;
                writeln!(rows, "{task},{},{},lmmse,{mse}", i.seed, size_label(&i.sizes)).expect("writing to a string");
            }
            m.metrics.insert(format!("{task}.lmmse.mse"), estimation_mse(&insts, &est)?);
            continue;
        }
        let name = match cfg.baseline.kind {
            BaselineKind::Wmmse => "wmmse",
            BaselineKind::ZeroForcing => "zero_forcing",
            BaselineKind::MatchedFilter => "matched_filter",
        };
        let se: Vec<f64> = match cfg.baseline.kind {
            BaselineKind::Wmmse => {
                let results = par_map(&test, cfg.threads, |i| Ok(wmmse(i, &cfg.wmmse)?))?;
                let mut violations = 0usize;
                let mut iterations = 0usize;
                for (inst, r) in test.iter().zip(&results) {
                    cache.insert(inst, r.se);
                    iterations += r.trace.len() - 1;
                    violations += r.trace.windows(2).filter(|w| w[1] < w[0] - 1e-9 * w[0].abs().max(1.0)).count();
                    for (it, v) in r.trace.iter().enumerate() {
                        writeln!(traces, "{task},{},{it},{v}", inst.seed).expect("writing to a string");
                    }
                }
                m.metrics.insert(format!("{task}.wmmse.monotone_violations"), violations as f64);
                m.metrics.insert(format!("{task}.wmmse.mean_iterations"), iterations as f64 / test.len() as f64);
                results.iter().map(|r| r.se).collect()
            }
            kind => {
                let policy = if kind == BaselineKind::ZeroForcing { zero_forcing } else { matched_filter };
                par_map(&test, cfg.threads, |i| Ok(se_objective(i, &policy(i)?, false)?))?
            }
        };
        for (inst, v) in test.iter().zip(&se) {
            writeln!(rows, "{task},{},{},{name},{v}", inst.seed, size_label(&inst.sizes)).expect("writing to a string");
        }
        fill_oracle(cfg, &mut cache, &test)?;
        m.metrics.insert(format!("{task}.{name}.mean_se"), se.iter().sum::<f64>() / se.len() as f64);
        m.metrics.insert(format!("{task}.{name}.se_ratio"), pemo_core::training::se_ratio_of(&test, &se, &cache)?);
    }
    save_oracle(&dir, &cfg.wmmse, &cache)?;
    write_file(&dir.join(BASELINE_FILE), rows.as_bytes())?;
    m.add_artifact(&dir, BASELINE_FILE)?;
    if cfg.baseline.kind == BaselineKind::Wmmse {
        write_file(&dir.join(TRACES_FILE), traces.as_bytes())?;
        m.add_artifact(&dir, TRACES_FILE)?;
    }
    finish(&m, &dir, start, BTreeMap::new())?;
    Ok(m)
}

/// Runs every equivariance check. The manifest is written either way; a
/// failed check is returned as an error afterwards.
pub fn verify_pe(cfg: &RunConfig) -> Result<(RunManifest, VerifyReport)> {
    let start = Instant::now();
    let dir = prepared(cfg)?;
    let report = verify_all(&cfg.verify)?;
    write_file(&dir.join(VERIFY_FILE), (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    let mut m = RunManifest::new("verify-pe", cfg);
    m.add_artifact(&dir, VERIFY_FILE)?;
    let passed = report.positive.iter().filter(|p| p.passed).count();
    let found = report.negative.iter().filter(|n| n.found()).count();
    let max_dev = report.positive.iter().map(|p| p.max_deviation).fold(0.0, f64::max);
    m.metrics.insert("positive.checks".into(), report.positive.len() as f64);
    m.metrics.insert("positive.passed".into(), passed as f64);
    m.metrics.insert("positive.max_deviation".into(), max_dev);
    m.metrics.insert("negative.checks".into(), report.negative.len() as f64);
    m.metrics.insert("negative.found".into(), found as f64);
    finish(&m, &dir, start, BTreeMap::new())?;
    if !report.all_passed() {
        let mut failures: Vec<String> = report
            .positive
            .iter()
            .filter(|p| !p.passed)
            .map(|p| format!("{} deviates by {:e} under {}", p.subject, p.max_deviation, p.property))
            .collect();
        failures.extend(
            report
                .negative
                .iter()
                .filter(|n| !n.found())
                .map(|n| format!("{} shows no violation of {}", n.subject, n.class)),
        );
        return Err(CliError::Verification(failures.join("; ")));
    }
    Ok((m, report))
}
