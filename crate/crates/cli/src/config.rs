//! Run configuration: one TOML file drives every subcommand.
//!
//! Sections, all optional except `tasks`:
//!
//! ```toml
//! output_dir = "runs/mu_miso"
//! threads = 1
//!
//! [[tasks]]
//! task = "mu_miso"
//! train_sizes = [{ m = 1, k = 4, n_t = 16, n_r = 1, n_rb = 1 }]
//! # test_sizes defaults to train_sizes
//! channel = { model = { kind = "saleh_valenzuela", clusters = 4, rays = 5, angular_spread = 0.0873 }, snr_db = 10.0 }
//!
//! [data]     # train_samples (per size), test_samples (per size), train_seed, test_seed
//! [train]    # batch_size, epochs, learning_rate, widths, seed, loss_weights
//! [model]    # activation, reuse_global_branch, init = { attention, feed_forward, off_diagonal }
//! [wmmse]    # max_iters, tol, bisection_tol
//! [baseline] # kind = "wmmse" | "zero_forcing" | "matched_filter", lmmse_draws, lmmse_seed
//! [verify]   # n_t, k, n_r, m, trials, tol, violation_threshold, attempts, widths, seed
//! ```

use std::path::{Path, PathBuf};

use pemo_core::baselines::WmmseConfig;
use pemo_core::composer::ComposeOptions;
use pemo_core::equivariance::VerifyConfig;
use pemo_core::training::TrainConfig;
use pemo_core::wireless::{ChannelConfig, Sizes, TaskKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "PEMO_OUTPUT_DIR";
/// Caps `threads`.
pub const THREADS_ENV: &str = "PEMO_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSetup {
    pub task: TaskKind,
    pub train_sizes: Vec<Sizes>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_sizes: Vec<Sizes>,
    pub channel: ChannelConfig,
}

impl TaskSetup {
    /// Desk-scale setup of a task at 10 dB.
    pub fn desk_scale(task: TaskKind) -> TaskSetup {
        let mut channel = ChannelConfig::sv(10.0);
        let sizes = match task {
            TaskKind::MuMiso | TaskKind::Estimation => Sizes::miso(16, 4),
            TaskKind::MuMimo => Sizes::mimo(8, 3, 2),
            TaskKind::CoordinatedBeamforming | TaskKind::PowerAllocation => {
                channel.interference_gain_range = Some((0.5, 1.0));
                Sizes::multi_cell(8, 3, 2)
            }
            TaskKind::Wideband => {
                channel.model = pemo_core::wireless::ChannelModel::tap_delay(2);
                Sizes::wideband(8, 3, 4)
            }
        };
        TaskSetup {
            task,
            train_sizes: vec![sizes],
            test_sizes: Vec::new(),
            channel,
        }
    }

    pub fn test_sizes(&self) -> &[Sizes] {
        if self.test_sizes.is_empty() {
            &self.train_sizes
        } else {
            &self.test_sizes
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Training samples per task and size.
    pub train_samples: usize,
    /// Test samples per task and size.
    pub test_samples: usize,
    pub train_seed: u64,
    pub test_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_samples: 100,
            test_samples: 200,
            train_seed: 1,
            test_seed: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub widths: Vec<usize>,
    /// Seeds parameter initialization and batch shuffling.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<Vec<f64>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            widths: t.widths,
            seed: t.seed,
            loss_weights: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Wmmse,
    ZeroForcing,
    MatchedFilter,
}

/// Baseline run on the test sets. Estimation tasks always use LMMSE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub kind: BaselineKind,
    /// Channel draws for the LMMSE covariance estimate.
    pub lmmse_draws: usize,
    pub lmmse_seed: u64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            kind: BaselineKind::Wmmse,
            lmmse_draws: 10_000,
            lmmse_seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub threads: usize,
    pub tasks: Vec<TaskSetup>,
    pub data: DataConfig,
    pub train: TrainSection,
    pub model: ComposeOptions,
    pub wmmse: WmmseConfig,
    pub baseline: BaselineSection,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("runs/default"),
            threads: 1,
            tasks: vec![TaskSetup::desk_scale(TaskKind::MuMiso)],
            data: DataConfig::default(),
            train: TrainSection::default(),
            model: ComposeOptions::default(),
            wmmse: WmmseConfig::default(),
            baseline: BaselineSection::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<RunConfig> {
        toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Sets the value at a dotted path, e.g. `train.epochs=50` or
    /// `model.init.attention=0.02`. The value is read as a TOML literal and
    /// falls back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key.path=value")))?;
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(|e| CliError::Config(e.to_string()))?;
        let mut node = &mut root;
        let keys: Vec<&str> = path.trim().split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let last = i + 1 == keys.len();
            node = match node {
                toml::Value::Table(t) => {
                    if last {
                        t.insert(key.to_string(), value);
                        break;
                    }
                    t.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
                }
                toml::Value::Array(a) => {
                    let idx: usize = key
                        .parse()
                        .map_err(|_| CliError::Config(format!("`{key}` in `{path}` must index an array")))?;
                    let len = a.len();
                    let slot = a
                        .get_mut(idx)
                        .ok_or_else(|| CliError::Config(format!("index {idx} in `{path}` is out of range ({len} entries)")))?;
                    if last {
                        *slot = value;
                        break;
                    }
                    slot
                }
                _ => return Err(CliError::Config(format!("`{path}` descends into a plain value"))),
            };
        }
        *self = root.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("{path}: {e}")))?;
        Ok(())
    }

    /// Applies the output-directory override and the thread cap.
    pub fn apply_env_values(&mut self, output_dir: Option<String>, threads: Option<String>) -> Result<()> {
        if let Some(dir) = output_dir.filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        if let Some(t) = threads {
            let cap: usize = t
                .parse()
                .map_err(|_| CliError::Config(format!("{THREADS_ENV}={t} is not a thread count")))?;
            self.threads = self.threads.min(cap.max(1));
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_env_values(std::env::var(OUTPUT_DIR_ENV).ok(), std::env::var(THREADS_ENV).ok())
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(CliError::Config("at least one [[tasks]] entry is required".into()));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].iter().any(|o| o.task == t.task) {
                return Err(CliError::Config(format!("task {} is listed twice", t.task)));
            }
            if t.train_sizes.is_empty() {
                return Err(CliError::Config(format!("task {} has no train_sizes", t.task)));
            }
            for s in t.train_sizes.iter().chain(t.test_sizes()) {
                s.validate()?;
            }
            t.channel.validate()?;
        }
        if self.data.train_samples == 0 || self.data.test_samples == 0 {
            return Err(CliError::Config("sample counts must be positive".into()));
        }
        if self.threads == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        self.train_config().validate()?;
        self.wmmse.validate()?;
        Ok(())
    }

    pub fn task_kinds(&self) -> Vec<TaskKind> {
        self.tasks.iter().map(|t| t.task).collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            tasks: self.task_kinds(),
            samples_per_task: self.data.train_samples,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            widths: self.train.widths.clone(),
            seed: self.train.seed,
            loss_weights: self.train.loss_weights.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let mut c = RunConfig::default();
        c.apply_override("train.epochs=7").unwrap();
        c.apply_override("model.init.attention=0.125").unwrap();
        c.apply_override("tasks.0.channel.snr_db=15.0").unwrap();
        c.apply_override("baseline.kind=zero_forcing").unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.model.init.attention, 0.125);
        assert_eq!(c.tasks[0].channel.snr_db, 15.0);
        assert_eq!(c.baseline.kind, BaselineKind::ZeroForcing);
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.apply_override("train.epochs").is_err());
        assert!(c.apply_override("train.epochs=\"many\"").is_err());
        assert!(c.apply_override("tasks.3.channel.snr_db=1.0").is_err());
        assert!(c.apply_override("train.nonsense=1").is_err());
    }

    #[test]
    fn thread_cap_only_lowers() {
        let mut c = RunConfig {
            threads: 4,
            ..RunConfig::default()
        };
        c.apply_env_values(Some("out/x".into()), Some("2".into())).unwrap();
        assert_eq!((c.threads, c.output_dir.as_path()), (2, Path::new("out/x")));
        c.apply_env_values(None, Some("8".into())).unwrap();
        assert_eq!(c.threads, 2);
        assert!(c.apply_env_values(None, Some("lots".into())).is_err());
    }
}
