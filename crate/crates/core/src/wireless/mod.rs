//! Channel sampling, problem instances, token construction and the
//! spectral-efficiency objective for the implemented tasks.

mod channel;
mod dataset;
mod duality;
mod links;
mod objective;
mod tokens;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::complex::ComplexMatrix;
use crate::error::{CoreError, Result};

pub(crate) use channel::unit_zf_beams;
pub use channel::{
    make_estimation_instance, sample_channel, sample_instance, steering_vector, ChannelConfig, ChannelModel,
};
pub use dataset::{read_dataset, write_dataset, DatasetRecord};
pub use duality::duality_recover;
pub use links::{Link, LinkModel, Transmitter};
pub use objective::{
    estimation_mse, estimation_mse_var, normalized_precoders, precoders_from_output, se_objective, se_var,
    spd_logdet_var, task_loss_var, PrecoderVars,
};
pub use tokens::{build_tokens, token_structure};

/// Implemented tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MuMiso,
    MuMimo,
    CoordinatedBeamforming,
    PowerAllocation,
    Wideband,
    Estimation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::MuMiso,
        TaskKind::MuMimo,
        TaskKind::CoordinatedBeamforming,
        TaskKind::PowerAllocation,
        TaskKind::Wideband,
        TaskKind::Estimation,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            TaskKind::MuMiso => "mu_miso",
            TaskKind::MuMimo => "mu_mimo",
            TaskKind::CoordinatedBeamforming => "cb",
            TaskKind::PowerAllocation => "power_allocation",
            TaskKind::Wideband => "wideband",
            TaskKind::Estimation => "estimation",
        }
    }

    /// Name of the task's row in the policy table.
    pub fn policy(self) -> &'static str {
        match self {
            TaskKind::MuMiso => "MU-MISO precoding",
            TaskKind::MuMimo => "MU-MIMO precoding",
            TaskKind::CoordinatedBeamforming => "CB",
            TaskKind::PowerAllocation => "Multi-cell power allocation",
            TaskKind::Wideband => "Wideband MU-MISO precoding",
            TaskKind::Estimation => "Channel estimation",
        }
    }

    pub fn is_precoding(self) -> bool {
        self != TaskKind::Estimation
    }

    /// Number of consecutive token groups per batch entry.
    pub fn reps(self, sizes: &Sizes) -> usize {
        match self {
            TaskKind::CoordinatedBeamforming | TaskKind::PowerAllocation => sizes.m,
            TaskKind::Wideband => sizes.n_rb,
            _ => 1,
        }
    }

    /// Input and output widths of the task's model: features per block for
    /// parameter-shared stacks, whole token widths for the dense estimator.
    pub fn io_sizes(self, sizes: &Sizes) -> crate::composer::IoSizes {
        match self {
            TaskKind::Estimation => crate::composer::IoSizes {
                input: 2 * sizes.n_t,
                output: 2 * sizes.n_t,
            },
            _ => crate::composer::IoSizes { input: 2, output: 2 },
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for TaskKind {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .iter()
            .copied()
            .find(|t| t.tag() == s || t.policy().eq_ignore_ascii_case(s))
            .ok_or_else(|| CoreError::Unknown {
                kind: "task",
                name: s.to_string(),
                known: TaskKind::ALL.iter().map(|t| t.tag()).collect::<Vec<_>>().join(", "),
            })
    }
}

/// Problem sizes. Unused fields are 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    /// Cells (base stations).
    pub m: usize,
    /// Users per cell.
    pub k: usize,
    /// Transmit antennas per base station.
    pub n_t: usize,
    /// Receive antennas per user.
    pub n_r: usize,
    /// Resource blocks.
    pub n_rb: usize,
}

impl Sizes {
    pub fn miso(n_t: usize, k: usize) -> Self {
        Sizes { m: 1, k, n_t, n_r: 1, n_rb: 1 }
    }

    pub fn mimo(n_t: usize, k: usize, n_r: usize) -> Self {
        Sizes { m: 1, k, n_t, n_r, n_rb: 1 }
    }

    pub fn multi_cell(n_t: usize, k: usize, m: usize) -> Self {
        Sizes { m, k, n_t, n_r: 1, n_rb: 1 }
    }

    pub fn wideband(n_t: usize, k: usize, n_rb: usize) -> Self {
        Sizes { m: 1, k, n_t, n_r: 1, n_rb }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.m, self.k, self.n_t, self.n_r, self.n_rb].contains(&0) {
            return Err(CoreError::Invalid(format!("sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// One sample of a task.
///
/// Channel layouts (`h`):
/// - MU-MISO and estimation: `N_t x K`, column `k` is user `k`'s channel
///   (for estimation, the noisy observation; the true channel is in
///   `labels`).
/// - MU-MIMO: `N_t x K·N_r`, column `k·N_r + r` is receive antenna `r` of
///   user `k`.
/// - CB: `M·N_t x M·K`, rows `m'·N_t..` are base station `m'`, column
///   `m·K + k` is user `k` of cell `m`.
/// - Power allocation: `M·K x M·K` equivalent channel after in-cell
///   zero-forcing; entry `((m', j), (m, k))` is `h^H w` from beam `j` of
///   base station `m'` to user `k` of cell `m`.
/// - Wideband: `N_t x n_rb·K`, column `b·K + k` is user `k` on block `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub task: TaskKind,
    pub sizes: Sizes,
    pub h: ComplexMatrix,
    pub sigma2: f64,
    pub p_t: f64,
    pub labels: Option<ComplexMatrix>,
    /// Cross-cell power gains, row-major over `(m', m)` with `m' != m`.
    pub cross_gains: Vec<f64>,
    pub seed: u64,
}

impl ProblemInstance {
    /// Expected channel shape for a task.
    pub fn channel_shape(task: TaskKind, s: &Sizes) -> (usize, usize) {
        match task {
            TaskKind::MuMiso | TaskKind::Estimation => (s.n_t, s.k),
            TaskKind::MuMimo => (s.n_t, s.k * s.n_r),
            TaskKind::CoordinatedBeamforming => (s.m * s.n_t, s.m * s.k),
            TaskKind::PowerAllocation => (s.m * s.k, s.m * s.k),
            TaskKind::Wideband => (s.n_t, s.n_rb * s.k),
        }
    }

    /// Expected precoder shape: columns follow the channel's user columns;
    /// for CB each column lives at its own cell's base station; for power
    /// allocation the "precoder" is the `M·K x 1` vector of amplitudes.
    pub fn precoder_shape(&self) -> (usize, usize) {
        let s = &self.sizes;
        match self.task {
            TaskKind::MuMiso | TaskKind::Estimation => (s.n_t, s.k),
            TaskKind::MuMimo => (s.n_t, s.k * s.n_r),
            TaskKind::CoordinatedBeamforming => (s.n_t, s.m * s.k),
            TaskKind::PowerAllocation => (s.m * s.k, 1),
            TaskKind::Wideband => (s.n_t, s.n_rb * s.k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sizes.validate()?;
        if !(self.sigma2 > 0.0) || !(self.p_t > 0.0) {
            return Err(CoreError::Invalid("noise power and budget must be positive".into()));
        }
        let (r, c) = Self::channel_shape(self.task, &self.sizes);
        if self.h.rows() != r || self.h.cols() != c {
            return Err(CoreError::Dimension(format!(
                "{} channel is {}x{}, expected {r}x{c}",
                self.task,
                self.h.rows(),
                self.h.cols()
            )));
        }
        if !self.h.is_finite() {
            return Err(CoreError::NonFinite(format!("{} channel", self.task)));
        }
        Ok(())
    }

    /// SNR in dB implied by budget and noise power.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.p_t / self.sigma2).log10()
    }
}
