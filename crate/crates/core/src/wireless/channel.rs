use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ProblemInstance, Sizes, TaskKind};
use crate::complex::{complex_solve, ComplexMatrix};
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    /// Clustered multipath on a half-wavelength uniform linear array. Ray
    /// angles are Gaussian around a uniform cluster angle with standard
    /// deviation `angular_spread` radians.
    SalehValenzuela {
        clusters: usize,
        rays: usize,
        angular_spread: f64,
    },
    Rayleigh,
    /// Independent clustered channels per delay tap with power split evenly
    /// across taps; each resource block sees the DFT of the taps.
    TapDelay {
        taps: usize,
        clusters: usize,
        rays: usize,
        angular_spread: f64,
    },
}

impl ChannelModel {
    pub fn sv() -> Self {
        ChannelModel::SalehValenzuela {
            clusters: 4,
            rays: 5,
            angular_spread: 5f64.to_radians(),
        }
    }

    pub fn tap_delay(taps: usize) -> Self {
        ChannelModel::TapDelay {
            taps,
            clusters: 4,
            rays: 5,
            angular_spread: 5f64.to_radians(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub model: ChannelModel,
    pub snr_db: f64,
    /// Range of the cross-cell to in-cell power ratio, multi-cell tasks only.
    #[serde(default)]
    pub interference_gain_range: Option<(f64, f64)>,
    #[serde(default = "unit_budget")]
    pub p_t: f64,
}

fn unit_budget() -> f64 {
    1.0
}

impl ChannelConfig {
    pub fn sv(snr_db: f64) -> Self {
        ChannelConfig {
            model: ChannelModel::sv(),
            snr_db,
            interference_gain_range: None,
            p_t: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.model {
            ChannelModel::SalehValenzuela { clusters, rays, angular_spread }
            | ChannelModel::TapDelay {
                clusters,
                rays,
                angular_spread,
                ..
            } => {
                if clusters == 0 || rays == 0 {
                    return invalid("clusters and rays must be at least 1");
                }
                if !(angular_spread >= 0.0) {
                    return invalid("angular spread must be nonnegative");
                }
            }
            ChannelModel::Rayleigh => {}
        }
        if let ChannelModel::TapDelay { taps: 0, .. } = self.model {
            return invalid("tap-delay model needs at least one tap");
        }
        if let Some((lo, hi)) = self.interference_gain_range {
            if !(lo > 0.0 && lo <= hi) {
                return invalid(format!("interference gain range ({lo}, {hi}) needs 0 < lo <= hi"));
            }
        }
        if !(self.p_t > 0.0) || !self.snr_db.is_finite() {
            return invalid("budget must be positive and SNR finite");
        }
        Ok(())
    }

    /// Noise power for unit-variance channel entries: `P_t / 10^(snr/10)`.
    pub fn sigma2(&self) -> f64 {
        self.p_t / 10f64.powf(self.snr_db / 10.0)
    }
}

/// `a(θ)_n = exp(jπ n sin θ)` for a half-wavelength uniform linear array.
pub fn steering_vector(n: usize, theta: f64) -> Vec<Complex64> {
    let s = std::f64::consts::PI * theta.sin();
    (0..n).map(|i| Complex64::from_polar(1.0, s * i as f64)).collect()
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let half = std::f64::consts::FRAC_PI_2;
    // (-π/2, π/2]
    half - rng.gen::<f64>() * std::f64::consts::PI
}

/// One clustered-multipath channel matrix `n_tx x n_rx` (`n_rx = 1` gives a
/// vector), `Σ α a_t(θ_t) a_r(θ_r)^H` with total path power `power`.
fn sv_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    n_tx: usize,
    n_rx: usize,
    clusters: usize,
    rays: usize,
    spread: f64,
    power: f64,
) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(n_tx, n_rx);
    let var = power / (clusters * rays) as f64;
    let jitter = Normal::new(0.0, spread.max(0.0)).expect("nonnegative spread");
    for _ in 0..clusters {
        let phi_t = uniform_angle(rng);
        let phi_r = uniform_angle(rng);
        for _ in 0..rays {
            let alpha = complex_normal(rng, var);
            let th_t = phi_t + if spread > 0.0 { jitter.sample(rng) } else { 0.0 };
            let th_r = phi_r + if spread > 0.0 { jitter.sample(rng) } else { 0.0 };
            let at = steering_vector(n_tx, th_t);
            let ar = steering_vector(n_rx, th_r);
            for (i, a) in at.iter().enumerate() {
                for (j, b) in ar.iter().enumerate() {
                    let v = h.get(i, j) + alpha * a * b.conj();
                    h.set(i, j, v);
                }
            }
        }
    }
    h
}

/// `n_users` independent channels of `n_rx` receive antennas each, as the
/// columns of an `n_tx x n_users·n_rx` matrix with unit average power per
/// entry.
pub fn sample_channel<R: Rng + ?Sized>(
    model: &ChannelModel,
    n_tx: usize,
    n_users: usize,
    n_rx: usize,
    rng: &mut R,
) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(n_tx, n_users * n_rx);
    for u in 0..n_users {
        let block = match *model {
            ChannelModel::SalehValenzuela {
                clusters,
                rays,
                angular_spread,
            }
            | ChannelModel::TapDelay {
                clusters,
                rays,
                angular_spread,
                ..
            } => sv_matrix(rng, n_tx, n_rx, clusters, rays, angular_spread, 1.0),
            ChannelModel::Rayleigh => {
                let mut m = ComplexMatrix::zeros(n_tx, n_rx);
                for r in 0..n_tx {
                    for c in 0..n_rx {
                        m.set(r, c, complex_normal(rng, 1.0));
                    }
                }
                m
            }
        };
        h.set_block(0, u * n_rx, &block);
    }
    h
}

/// Unit-norm zero-forcing beams for the columns of `h`.
pub(crate) fn unit_zf_beams(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let gram = h.h().matmul(h)?;
    let x = complex_solve(&gram, &ComplexMatrix::identity(h.cols()))?;
    let w = h.matmul(&x)?;
    let norms: Vec<f64> = (0..w.cols()).map(|c| 1.0 / w.column_norm_sq(c).sqrt()).collect();
    Ok(w.scale_columns(&norms))
}

fn multi_cell_channel<R: Rng + ?Sized>(
    model: &ChannelModel,
    s: &Sizes,
    range: (f64, f64),
    rng: &mut R,
) -> (ComplexMatrix, Vec<f64>) {
    let mut h = ComplexMatrix::zeros(s.m * s.n_t, s.m * s.k);
    let mut gains = Vec::with_capacity(s.m * (s.m - 1));
    for bs in 0..s.m {
        for cell in 0..s.m {
            let block = sample_channel(model, s.n_t, s.k, 1, rng);
            let block = if bs == cell {
                block
            } else {
                let rho = if range.0 == range.1 { range.0 } else { rng.gen_range(range.0..range.1) };
                gains.push(rho);
                block.scale(rho.sqrt())
            };
            h.set_block(bs * s.n_t, cell * s.k, &block);
        }
    }
    (h, gains)
}

/// Equivalent channel seen by per-user power variables once every base
/// station serves its own users with unit-norm zero-forcing beams.
pub(crate) fn equivalent_channel(h: &ComplexMatrix, s: &Sizes) -> Result<ComplexMatrix> {
    let mk = s.m * s.k;
    let mut g = ComplexMatrix::zeros(mk, mk);
    for bs in 0..s.m {
        let own = h.block(bs * s.n_t, bs * s.k, s.n_t, s.k);
        let w = unit_zf_beams(&own)?;
        let rows = h.block(bs * s.n_t, 0, s.n_t, mk);
        // entry (j, u) = h_u^H w_j
        let cross = w.h().matmul(&rows)?;
        for j in 0..s.k {
            for u in 0..mk {
                g.set(bs * s.k + j, u, cross.get(j, u).conj());
            }
        }
    }
    Ok(g)
}

fn check_model(task: TaskKind, cfg: &ChannelConfig) -> Result<()> {
    cfg.validate()?;
    if matches!(cfg.model, ChannelModel::TapDelay { .. }) && task != TaskKind::Wideband {
        return invalid(format!("the tap-delay model applies to the wideband task, not {task}"));
    }
    Ok(())
}

/// Samples one instance of `task`. Deterministic per `seed`.
pub fn sample_instance(task: TaskKind, cfg: &ChannelConfig, sizes: &Sizes, seed: u64) -> Result<ProblemInstance> {
    sizes.validate()?;
    check_model(task, cfg)?;
    let s = *sizes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cross_gains = Vec::new();
    let mut labels = None;
    let h = match task {
        TaskKind::MuMiso => sample_channel(&cfg.model, s.n_t, s.k, 1, &mut rng),
        TaskKind::MuMimo => sample_channel(&cfg.model, s.n_t, s.k, s.n_r, &mut rng),
        TaskKind::CoordinatedBeamforming | TaskKind::PowerAllocation => {
            let range = cfg.interference_gain_range.unwrap_or((1.0, 1.0));
            let (h, g) = multi_cell_channel(&cfg.model, &s, range, &mut rng);
            cross_gains = g;
            if task == TaskKind::PowerAllocation {
                if s.k > s.n_t {
                    return invalid("zero-forcing beams need K <= N_t");
                }
                equivalent_channel(&h, &s)?
            } else {
                h
            }
        }
        TaskKind::Wideband => wideband_channel(&cfg.model, &s, &mut rng),
        TaskKind::Estimation => {
            let h = sample_channel(&cfg.model, s.n_t, s.k, 1, &mut rng);
            let noise_var = 10f64.powf(-cfg.snr_db / 10.0);
            let mut y = h.clone();
            for r in 0..s.n_t {
                for c in 0..s.k {
                    y.set(r, c, h.get(r, c) + complex_normal(&mut rng, noise_var));
                }
            }
            labels = Some(h);
            y
        }
    };
    let inst = ProblemInstance {
        task,
        sizes: s,
        h,
        sigma2: cfg.sigma2(),
        p_t: cfg.p_t,
        labels,
        cross_gains,
        seed,
    };
    inst.validate()?;
    Ok(inst)
}

fn wideband_channel<R: Rng + ?Sized>(model: &ChannelModel, s: &Sizes, rng: &mut R) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(s.n_t, s.n_rb * s.k);
    match *model {
        ChannelModel::TapDelay { taps, .. } => {
            let scale = (1.0 / taps as f64).sqrt();
            let tap_channels: Vec<ComplexMatrix> =
                (0..taps).map(|_| sample_channel(model, s.n_t, s.k, 1, rng).scale(scale)).collect();
            for b in 0..s.n_rb {
                let mut acc = ComplexMatrix::zeros(s.n_t, s.k);
                for (d, tap) in tap_channels.iter().enumerate() {
                    let phase = -2.0 * std::f64::consts::PI * (d * b) as f64 / s.n_rb as f64;
                    acc = acc.add(&tap.scale_complex(Complex64::from_polar(1.0, phase))).expect("same shape");
                }
                h.set_block(0, b * s.k, &acc);
            }
        }
        _ => {
            for b in 0..s.n_rb {
                let blk = sample_channel(model, s.n_t, s.k, 1, rng);
                h.set_block(0, b * s.k, &blk);
            }
        }
    }
    h
}

/// Estimation sample: observation `y = h + n` with per-entry noise variance
/// `10^(-snr/10)` relative to the unit channel power; the label is `h`.
pub fn make_estimation_instance(cfg: &ChannelConfig, sizes: &Sizes, seed: u64) -> Result<ProblemInstance> {
    sample_instance(TaskKind::Estimation, cfg, sizes, seed)
}
