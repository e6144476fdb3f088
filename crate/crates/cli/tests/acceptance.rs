//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a failure status if any criterion fails.
//!
//! Run all of it with `cargo test -p pemo-cli --test acceptance`, or pick
//! criteria by number: `cargo test -p pemo-cli --test acceptance -- 1 5 7`.
//! Training runs go through the same pipeline as `pemo generate` and
//! `pemo train`, with the configuration in `configs/moformer.toml`.

use std::collections::BTreeMap;
use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use pemo_cli::commands::{self, generate_split, load_oracle, load_trained, Split};
use pemo_cli::{RunConfig, RunManifest};
use pemo_core::baselines::{matched_filter, wmmse, zero_forcing, WmmseConfig};
use pemo_core::composer::{ComposeOptions, PEProperty};
use pemo_core::equivariance::{
    composed_fn, equivariance_suite, find_violation, shared_then_dense_fn, verify_all, Layout, VerifyConfig,
};
use pemo_core::matrix::Matrix;
use pemo_core::permutations::{all_permutations, enumerate_nested, mask_matrix, PermutationSpec, SetStructure};
use pemo_core::training::{
    build_model, fine_tune, generalization_eval, generate_set, gradient_check, train, train_tracked, AxisValue,
    EvalSetup, GenAxis, GeneralizationReport, OracleCache, TaskData,
};
use pemo_core::wireless::{se_objective, ChannelConfig, ChannelModel, Sizes, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), Box<dyn Error>>;

/// Epochs of the short reruns in the determinism criterion.
const RERUN_EPOCHS: usize = 10;

struct Ctx {
    root: PathBuf,
    base: RunConfig,
    singles: BTreeMap<TaskKind, (RunManifest, f64)>,
}

impl Ctx {
    fn new() -> Result<Ctx, Box<dyn Error>> {
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        if root.exists() {
            std::fs::remove_dir_all(&root)?;
        }
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/moformer.toml");
        let mut base = RunConfig::load(&path)?;
        base.threads = 1;
        Ok(Ctx {
            root,
            base,
            singles: BTreeMap::new(),
        })
    }

    /// The joint configuration cut down to one task.
    fn single_config(&self, task: TaskKind, label: &str) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.tasks.retain(|t| t.task == task);
        cfg.output_dir = self.root.join(label);
        cfg
    }

    /// Single-task run of `task`, trained once and shared between criteria.
    fn single(&mut self, task: TaskKind) -> Result<(RunManifest, f64), Box<dyn Error>> {
        if let Some(r) = self.singles.get(&task) {
            return Ok(r.clone());
        }
        let cfg = self.single_config(task, &format!("single_{}", task.tag()));
        let r = pipeline(&cfg)?;
        self.singles.insert(task, r.clone());
        Ok(r)
    }
}

/// `generate` then `train` in a fresh directory; returns the train
/// manifest and the wall-clock seconds both took.
fn pipeline(cfg: &RunConfig) -> Result<(RunManifest, f64), Box<dyn Error>> {
    if cfg.output_dir.exists() {
        std::fs::remove_dir_all(&cfg.output_dir)?;
    }
    eprintln!("  training {:?} in {}", cfg.task_kinds(), cfg.output_dir.display());
    let start = Instant::now();
    commands::generate(cfg)?;
    let m = commands::train(cfg)?;
    Ok((m, start.elapsed().as_secs_f64()))
}

fn se_ratio_of(m: &RunManifest, task: TaskKind) -> Result<f64, Box<dyn Error>> {
    m.metrics
        .get(&format!("{task}.test_se_ratio"))
        .copied()
        .ok_or_else(|| format!("train manifest has no SE ratio for {task}").into())
}

fn equivariance_soundness(_: &mut Ctx) -> Check {
    let start = Instant::now();
    let report = verify_all(&VerifyConfig::default())?;
    let secs = start.elapsed().as_secs_f64();
    let mut bad: Vec<String> = report
        .positive
        .iter()
        .filter(|p| !(p.passed && p.max_deviation < 1e-9 && p.trials >= 100))
        .map(|p| format!("{} at {:e}", p.subject, p.max_deviation))
        .collect();
    bad.extend(report.negative.iter().filter(|n| !n.found()).map(|n| format!("{} has no witness", n.subject)));
    let natt = report
        .negative
        .iter()
        .any(|n| n.subject == "module natt" && n.class == PEProperty::PE1D && n.found());
    let diag = report
        .negative
        .iter()
        .filter(|n| n.subject.starts_with("composed") && n.claimed == PEProperty::Joint2D)
        .all(|n| n.class == PEProperty::Ind2D && n.found());
    let max_dev = report.positive.iter().map(|p| p.max_deviation).fold(0.0, f64::max);
    let modules = report.positive.iter().filter(|p| p.subject.starts_with("module")).count();
    Ok((
        bad.is_empty() && natt && diag && modules == 7 && secs < 60.0,
        format!(
            "{modules} modules and {} composed models, max deviation {max_dev:.2e}, {} counterexamples found, NATT breaks 1D-PE: {natt}, diag head breaks ind. 2D-PE: {diag}, {secs:.1} s{}",
            report.positive.len() - modules,
            report.negative.iter().filter(|n| n.found()).count(),
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
        ),
    ))
}

fn block_mask(n_sub: usize, n_s: usize) -> Matrix {
    let n = n_sub * n_s;
    Matrix::from_fn(n, n, |r, c| if r / n_s == c / n_s { 1.0 } else { 0.0 })
}

fn commutes(m: &Matrix, p: &Matrix) -> bool {
    m.matmul(p).unwrap() == p.matmul(m).unwrap()
}

fn mask_commutation(_: &mut Ctx) -> Check {
    let mut checked = 0;
    let mut failures = Vec::new();
    for n_sub in 1..=3 {
        for n_s in 1..=3 {
            let mask = block_mask(n_sub, n_s);
            if mask_matrix(&SetStructure::nested(n_sub, n_s)) != mask {
                failures.push(format!("mask for ({n_sub}, {n_s}) is not block-diagonal ones"));
            }
            for omega in enumerate_nested(&SetStructure::nested(n_sub, n_s))? {
                checked += 1;
                if !commutes(&mask, &omega.realize()) {
                    failures.push(format!("{:?}", omega.index_map()));
                }
            }
        }
    }
    let mask = block_mask(2, 2);
    let breaking = all_permutations(4)
        .into_iter()
        .filter(|p| !commutes(&mask, &PermutationSpec::normal(p.clone()).unwrap().realize()))
        .count();
    Ok((
        failures.is_empty() && breaking > 0,
        format!(
            "{checked} nested permutations commute exactly with the mask, {breaking} of 24 in S_4 do not at (2, 2){}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    ))
}

fn hadamard_interchange(_: &mut Ctx) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut cases, mut failures) = (0usize, 0usize);
    for r in 1..=4 {
        for c in 1..=4 {
            let mut draw = || Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-9..=9) as f64).collect()).unwrap();
            let (a, b) = (draw(), draw());
            for p1 in all_permutations(r) {
                let p1 = PermutationSpec::normal(p1)?.realize();
                for p2 in all_permutations(c) {
                    let p2 = PermutationSpec::normal(p2)?.realize();
                    let sandwich = |m: &Matrix| p1.matmul(m).unwrap().matmul(&p2).unwrap();
                    cases += 1;
                    if sandwich(&a.hadamard(&b)?) != sandwich(&a).hadamard(&sandwich(&b))? {
                        failures += 1;
                    }
                }
            }
        }
    }
    Ok((failures == 0, format!("{cases} permutation pairs over all shapes up to 4x4, {failures} mismatches")))
}

fn composition_properties(_: &mut Ctx) -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (n_t, k) in [(4, 4), (3, 5), (5, 3)] {
        let layout = Layout::for_property(PEProperty::Joint2D, n_t, k, 1, 1, 2);
        let f = composed_fn(PEProperty::Joint2D, &layout, &[4, 4], 3)?;
        let joint = equivariance_suite(f.as_ref(), &layout, PEProperty::Joint2D, 100, 1e-9, 1)?;
        let ind = find_violation(f.as_ref(), &layout, PEProperty::Ind2D, 200, 1e-6, 2)?;
        ok &= joint.passed && ind.is_some();
        notes.push(format!("diag head {n_t}x{k}: joint {:.1e}, ind. witness {}", joint.max_deviation, ind.is_some()));

        let layout = Layout::for_property(PEProperty::Ind2D, n_t, k, 1, 1, 2);
        let f = shared_then_dense_fn(&layout, 3, 5)?;
        let one = equivariance_suite(f.as_ref(), &layout, PEProperty::PE1D, 100, 1e-9, 1)?;
        let ind = find_violation(f.as_ref(), &layout, PEProperty::Ind2D, 200, 1e-6, 2)?;
        ok &= one.passed && ind.is_some();
        notes.push(format!("ATT after ATT(P.S.) {n_t}x{k}: 1D {:.1e}, ind. witness {}", one.max_deviation, ind.is_some()));
    }
    Ok((ok, notes.join("; ")))
}

fn gradient_correctness(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    let widths = ctx.base.train.widths.clone();
    let mut ok = true;
    let mut notes = Vec::new();
    for (task, sizes) in [(TaskKind::MuMiso, Sizes::miso(4, 2)), (TaskKind::MuMimo, Sizes::mimo(4, 2, 2))] {
        let mo = build_model(&[(task, sizes)], &widths, 11, &ctx.base.model)?;
        let data = generate_set(task, &ChannelConfig::sv(10.0), &sizes, 1, 77)?;
        let checks = gradient_check(&mo, &data, 1e-4)?;
        let covered: usize = checks.iter().map(|c| c.numel).sum();
        let abs = checks.iter().map(|c| c.max_abs_error).fold(0.0, f64::max);
        let scale = checks.iter().map(|c| c.max_abs_gradient).fold(0.0, f64::max);
        let per_tensor = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
        ok &= abs / scale < 1e-5 && covered == mo.param_count();
        notes.push(format!(
            "{task}: {covered} of {} parameters, relative error {:.2e} (largest absolute {abs:.1e}; worst single tensor {per_tensor:.1e})",
            mo.param_count(),
            abs / scale
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    Ok((ok, format!("{}, {secs:.1} s", notes.join("; "))))
}

fn wmmse_health(_: &mut Ctx) -> Check {
    let data = generate_set(TaskKind::MuMiso, &ChannelConfig::sv(10.0), &Sizes::miso(16, 4), 100, 9_000)?;
    let cfg = WmmseConfig::default();
    let (mut non_monotone, mut below_zf, mut below_mf) = (0, 0, 0);
    let mut worst_step = 0.0f64;
    for inst in &data {
        let r = wmmse(inst, &cfg)?;
        for w in r.trace.windows(2) {
            worst_step = worst_step.max(w[0] - w[1]);
        }
        if r.trace.windows(2).any(|w| w[1] < w[0] - 1e-9) {
            non_monotone += 1;
        }
        if r.se < se_objective(inst, &zero_forcing(inst)?, false)? {
            below_zf += 1;
        }
        if r.se < se_objective(inst, &matched_filter(inst)?, false)? {
            below_mf += 1;
        }
    }
    Ok((
        non_monotone + below_zf + below_mf == 0,
        format!(
            "100 instances: {non_monotone} non-monotone traces (largest decrease {worst_step:.1e}), {below_zf} below ZF, {below_mf} below MF"
        ),
    ))
}

fn desk_training(ctx: &mut Ctx) -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for task in [TaskKind::MuMiso, TaskKind::MuMimo, TaskKind::CoordinatedBeamforming] {
        let (m, secs) = ctx.single(task)?;
        let r = se_ratio_of(&m, task)?;
        ok &= r >= 0.90 && secs <= 15.0 * 60.0;
        notes.push(format!("{task} {r:.4} in {secs:.0} s"));
    }
    Ok((ok, format!("SE ratio >= 0.90 needed: {} ({} epochs)", notes.join(", "), ctx.base.train.epochs)))
}

fn describe(r: &GeneralizationReport) -> String {
    r.points
        .iter()
        .map(|p| {
            let at = match r.axis {
                GenAxis::K => format!("K={}", p.sizes.k),
                GenAxis::NT => format!("N_t={}", p.sizes.n_t),
                GenAxis::Snr => format!("{} dB", p.channel.snr_db),
                _ => match p.channel.model {
                    ChannelModel::Rayleigh => "Rayleigh".to_string(),
                    _ => format!("{:?}", p.channel.model),
                },
            };
            format!("{at} {:.4} ({:+.1}%)", p.value, -100.0 * p.degradation)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn eval_setup(cfg: &RunConfig) -> EvalSetup {
    EvalSetup {
        n_test: cfg.data.test_samples,
        seed: cfg.data.test_seed + 500_000,
        wmmse: cfg.wmmse,
        threads: cfg.threads,
    }
}

fn size_generalization(ctx: &mut Ctx) -> Check {
    let mut cfg = ctx.single_config(TaskKind::MuMiso, "size_generalization");
    let home = Sizes::miso(16, 4);
    cfg.tasks[0].train_sizes = vec![Sizes::miso(16, 3), home];
    cfg.tasks[0].test_sizes = vec![home];
    let (m, _) = pipeline(&cfg)?;
    let in_dist = se_ratio_of(&m, TaskKind::MuMiso)?;
    let (_, mo, dir) = load_trained(&RunManifest::path_in(&cfg.output_dir, "train"))?;
    let before = mo.param_count();
    let mut cache = load_oracle(&dir, &cfg.wmmse)?;
    let channel = cfg.tasks[0].channel.clone();
    let setup = eval_setup(&cfg);
    let mut reports = Vec::new();
    for (axis, grid) in [(GenAxis::K, vec![AxisValue::Size(6)]), (GenAxis::NT, vec![AxisValue::Size(8), AxisValue::Size(32)])] {
        reports.push(generalization_eval(&mo, TaskKind::MuMiso, (&home, &channel), in_dist, axis, &grid, &setup, &mut cache)?);
    }
    let graph_params = mo.graph(TaskKind::MuMiso.tag())?.param_count(&mo.pool);
    let rebuilt = build_model(&[(TaskKind::MuMiso, Sizes::miso(32, 6))], &cfg.train.widths, cfg.train.seed, &cfg.model)?;
    let unchanged = mo.param_count() == before
        && reports.iter().all(|r| r.param_count == graph_params)
        && rebuilt.param_count() == before;
    let worst = reports.iter().flat_map(|r| &r.points).map(|p| p.degradation).fold(f64::NEG_INFINITY, f64::max);
    Ok((
        worst <= 0.20 && unchanged,
        format!(
            "trained at K in {{3, 4}}, in-distribution {in_dist:.4}; {}; worst drop {:.1}% (<= 20% needed); parameters {before} unchanged: {unchanged}",
            reports.iter().map(describe).collect::<Vec<_>>().join(", "),
            100.0 * worst
        ),
    ))
}

fn channel_generalization(ctx: &mut Ctx) -> Check {
    let (m, _) = ctx.single(TaskKind::MuMiso)?;
    let in_dist = se_ratio_of(&m, TaskKind::MuMiso)?;
    let (tm, mo, dir) = load_trained(&RunManifest::path_in(&m.config.output_dir, "train"))?;
    let cfg = &tm.config;
    let home = cfg.tasks[0].train_sizes[0];
    let channel = cfg.tasks[0].channel.clone();
    let mut cache = load_oracle(&dir, &cfg.wmmse)?;
    let setup = eval_setup(cfg);
    let snr = generalization_eval(
        &mo,
        TaskKind::MuMiso,
        (&home, &channel),
        in_dist,
        GenAxis::Snr,
        &[AxisValue::Snr(5.0), AxisValue::Snr(15.0), AxisValue::Snr(20.0)],
        &setup,
        &mut cache,
    )?;
    let model = generalization_eval(
        &mo,
        TaskKind::MuMiso,
        (&home, &channel),
        in_dist,
        GenAxis::ChannelModel,
        &[AxisValue::Channel(ChannelModel::Rayleigh)],
        &setup,
        &mut cache,
    )?;
    let worst = snr.points.iter().chain(&model.points).map(|p| p.value / in_dist).fold(f64::INFINITY, f64::min);
    Ok((
        worst >= 0.85,
        format!(
            "in-distribution {in_dist:.4}; {}, {}; worst keeps {:.1}% (>= 85% needed)",
            describe(&snr),
            describe(&model),
            100.0 * worst
        ),
    ))
}

fn channel_estimation(ctx: &mut Ctx) -> Check {
    let (m, _) = ctx.single(TaskKind::Estimation)?;
    let model = m.metrics.get("estimation.test_mse").copied().ok_or("no estimation MSE in the train manifest")?;
    let b = commands::baseline(&m.config)?;
    let lmmse = b.metrics.get("estimation.lmmse.mse").copied().ok_or("no LMMSE MSE in the baseline manifest")?;
    Ok((model <= lmmse, format!("model MSE {model:.4} vs LMMSE {lmmse:.4} on the same 200 test samples")))
}

fn moformer_accounting(ctx: &mut Ctx) -> Check {
    let cfg = ctx.base.clone();
    let specs: Vec<(TaskKind, Sizes)> = cfg.tasks.iter().map(|t| (t.task, t.train_sizes[0])).collect();
    let opts = ComposeOptions {
        reuse_global_branch: true,
        ..cfg.model.clone()
    };
    let joint_params = build_model(&specs, &cfg.train.widths, cfg.train.seed, &opts)?.param_count();
    let mut separate = 0;
    for s in &specs {
        separate += build_model(std::slice::from_ref(s), &cfg.train.widths, cfg.train.seed, &opts)?.param_count();
    }
    let mut joint_cfg = cfg.clone();
    joint_cfg.model = opts;
    joint_cfg.output_dir = ctx.root.join("moformer");
    let (jm, secs) = pipeline(&joint_cfg)?;
    let mut ok = joint_params < separate && jm.param_count == Some(joint_params);
    let mut notes = Vec::new();
    for task in cfg.task_kinds().into_iter().filter(|t| t.is_precoding()) {
        let joint = se_ratio_of(&jm, task)?;
        let single = se_ratio_of(&ctx.single(task)?.0, task)?;
        ok &= joint >= single - 0.05;
        notes.push(format!("{task} {joint:.4} vs {single:.4}"));
    }
    Ok((
        ok,
        format!(
            "{joint_params} shared parameters vs {separate} separate; joint training ({secs:.0} s) vs single, joint >= single - 0.05 needed: {}",
            notes.join(", ")
        ),
    ))
}

fn cross_task_fine_tuning(ctx: &mut Ctx) -> Check {
    let mut cfg = ctx.base.clone();
    cfg.tasks.retain(|t| matches!(t.task, TaskKind::MuMiso | TaskKind::CoordinatedBeamforming | TaskKind::MuMimo));
    let setup = |task: TaskKind| cfg.tasks.iter().find(|t| t.task == task).expect("task configured");
    let mut pre_data = TaskData::new();
    for task in [TaskKind::MuMiso, TaskKind::CoordinatedBeamforming] {
        pre_data.insert(task, generate_split(&cfg, setup(task), Split::Train)?);
    }
    let mimo_train = generate_split(&cfg, setup(TaskKind::MuMimo), Split::Train)?;
    let mimo_test = generate_split(&cfg, setup(TaskKind::MuMimo), Split::Test)?;
    let mut cache = OracleCache::default();
    cache.fill(&mimo_test, &cfg.wmmse, cfg.threads)?;
    let tcfg = cfg.train_config();

    eprintln!("  MU-MIMO from scratch");
    let mut scratch_pool = commands::build_pool(&cfg)?;
    let scratch = train_tracked(&mut scratch_pool, TaskKind::MuMimo, &mimo_train, &tcfg, &mimo_test, &cache, f64::INFINITY)?;
    let final_ratio = *scratch.curve.last().ok_or("empty learning curve")?;
    let threshold = 0.95 * final_ratio;
    let scratch_epochs = scratch.curve.iter().position(|&r| r >= threshold);

    eprintln!("  pre-training on MU-MISO and CB");
    let mut pool = commands::build_pool(&cfg)?;
    let mut pre_cfg = tcfg.clone();
    pre_cfg.tasks = vec![TaskKind::MuMiso, TaskKind::CoordinatedBeamforming];
    train(&mut pool, &pre_data, &pre_cfg)?;
    eprintln!("  fine-tuning MU-MIMO");
    let pre = [TaskKind::MuMiso, TaskKind::CoordinatedBeamforming];
    let tuned = fine_tune(&mut pool, &pre, TaskKind::MuMimo, &mimo_train, &tcfg, &mimo_test, &cache, threshold)?;
    let show = |e: Option<usize>| e.map_or("never".to_string(), |e| e.to_string());
    let ok = matches!((tuned.epochs_to_threshold, scratch_epochs), (Some(a), Some(b)) if a < b);
    Ok((
        ok,
        format!(
            "threshold {threshold:.4} (95% of from-scratch final {final_ratio:.4}); epochs to reach it: fine-tuned {} (start {:.4}), from scratch {}",
            show(tuned.epochs_to_threshold),
            tuned.curve[0],
            show(scratch_epochs)
        ),
    ))
}

fn determinism(ctx: &mut Ctx) -> Check {
    let mut runs: Vec<(String, RunConfig)> = [TaskKind::MuMiso, TaskKind::MuMimo, TaskKind::CoordinatedBeamforming]
        .into_iter()
        .map(|t| (t.tag().to_string(), ctx.single_config(t, &format!("rerun_{}", t.tag()))))
        .collect();
    let mut joint = ctx.base.clone();
    joint.output_dir = ctx.root.join("rerun_moformer");
    runs.push(("moformer".into(), joint));
    let mut differing = Vec::new();
    for (label, cfg) in &mut runs {
        cfg.train.epochs = RERUN_EPOCHS;
        let read = |c: &str| std::fs::read(RunManifest::path_in(&cfg.output_dir, c));
        pipeline(cfg)?;
        let first = (read("generate")?, read("train")?);
        pipeline(cfg)?;
        if (read("generate")?, read("train")?) != first {
            differing.push(label.clone());
        }
    }
    Ok((
        differing.is_empty(),
        format!(
            "generate and train manifests of {} runs at {RERUN_EPOCHS} epochs, rerun in place: {}",
            runs.len(),
            if differing.is_empty() { "all bit-identical".to_string() } else { format!("differ for {}", differing.join(", ")) }
        ),
    ))
}

type Criterion = (u32, &'static str, fn(&mut Ctx) -> Check);

const CRITERIA: [Criterion; 13] = [
    (1, "equivariance soundness", equivariance_soundness),
    (2, "mask commutes with nested permutations", mask_commutation),
    (3, "Hadamard product interchange", hadamard_interchange),
    (4, "composition properties", composition_properties),
    (5, "gradient correctness", gradient_correctness),
    (6, "WMMSE oracle health", wmmse_health),
    (7, "desk-scale training", desk_training),
    (8, "size generalization", size_generalization),
    (9, "SNR and channel generalization", channel_generalization),
    (10, "channel estimation", channel_estimation),
    (11, "shared pool accounting and joint training", moformer_accounting),
    (12, "cross-task fine-tuning", cross_task_fine_tuning),
    (13, "determinism", determinism),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut ctx = match Ctx::new() {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    let (mut passed, mut run) = (0, 0);
    for (id, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        eprintln!("[{id}] {name}");
        let start = Instant::now();
        let (ok, detail) = match check(&mut ctx) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        run += 1;
        passed += ok as usize;
        println!(
            "{} [{id:>2}] {name}: {detail} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{run} criteria passed");
    if passed == run {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
