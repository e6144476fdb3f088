//! Classical reference algorithms: WMMSE, zero-forcing and matched-filter
//! precoding, and the LMMSE channel estimator.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{complex_solve, hermitian_eigen, ComplexMatrix};
use crate::error::{invalid, CoreError, Result};
use crate::wireless::{sample_channel, unit_zf_beams, ChannelConfig, LinkModel, ProblemInstance, Sizes, TaskKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmmseConfig {
    pub max_iters: usize,
    /// Stop once the relative sum-rate improvement falls below this.
    pub tol: f64,
    /// Relative width at which bisection on the power multiplier hands over
    /// to Newton refinement.
    pub bisection_tol: f64,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        WmmseConfig {
            max_iters: 200,
            tol: 1e-6,
            bisection_tol: 1e-8,
        }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > 0.0) || !(self.bisection_tol > 0.0) {
            return invalid("WMMSE needs max_iters >= 1 and positive tolerances");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WmmseResult {
    /// Precoder in instance layout.
    pub v: ComplexMatrix,
    pub se: f64,
    /// Sum rate of the initial point and after every iteration.
    pub trace: Vec<f64>,
}

fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.rows(), a.cols(), |r, c| (a.get(r, c) + a.get(c, r).conj()) * 0.5)
}

/// Per-transmitter spectral data: `A_t = Q diag(λ) Q^H` and, for each of
/// its links, `|Q^H B_l|²` summed over streams.
struct GroupTerms {
    lambdas: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl GroupTerms {
    fn power(&self, mu: f64) -> f64 {
        let mut p = 0.0;
        for (lam, w) in self.lambdas.iter().zip(&self.weights) {
            for (l, c) in lam.iter().zip(w) {
                if *c > 0.0 {
                    p += c / (l + mu).powi(2);
                }
            }
        }
        p
    }

    fn dpower(&self, mu: f64) -> f64 {
        let mut d = 0.0;
        for (lam, w) in self.lambdas.iter().zip(&self.weights) {
            for (l, c) in lam.iter().zip(w) {
                if *c > 0.0 {
                    d -= 2.0 * c / (l + mu).powi(3);
                }
            }
        }
        d
    }

    fn singular_at_zero(&self) -> bool {
        let top = self.lambdas.iter().flatten().fold(0.0f64, |m, &l| m.max(l));
        self.lambdas
            .iter()
            .zip(&self.weights)
            .any(|(lam, w)| lam.iter().zip(w).any(|(&l, &c)| l <= 1e-12 * top.max(1e-300) && c > 0.0))
    }
}

/// Smallest multiplier `μ >= 0` with group power at most `budget`.
fn power_multiplier(terms: &GroupTerms, budget: f64, cfg: &WmmseConfig) -> Result<f64> {
    if !terms.singular_at_zero() && terms.power(0.0) <= budget {
        return Ok(0.0);
    }
    let total: f64 = terms.weights.iter().flatten().sum();
    let mut hi = (total / budget).sqrt().max(f64::MIN_POSITIVE);
    while terms.power(hi) > budget {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(CoreError::Bisection(format!("no feasible multiplier; total weight {total:e}")));
        }
    }
    let mut lo = 0.0;
    let mut iters = 0;
    while hi - lo > cfg.bisection_tol * hi {
        let mid = 0.5 * (lo + hi);
        if terms.power(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        if iters > 400 {
            return Err(CoreError::Bisection(format!("interval [{lo:e}, {hi:e}] did not shrink")));
        }
    }
    // Newton from the infeasible side converges monotonically to the root of
    // the convex decreasing power curve.
    let mut mu = if lo > 0.0 { lo } else { hi };
    for _ in 0..60 {
        let f = terms.power(mu) - budget;
        let d = terms.dpower(mu);
        if d == 0.0 || !f.is_finite() {
            break;
        }
        let next = (mu - f / d).clamp(lo, hi);
        if (next - mu).abs() <= 1e-15 * mu.max(f64::MIN_POSITIVE) {
            mu = next;
            break;
        }
        mu = next;
    }
    if !mu.is_finite() {
        return Err(CoreError::Bisection(format!("multiplier diverged in [{lo:e}, {hi:e}]")));
    }
    Ok(mu)
}

/// Weighted MMSE block-coordinate ascent on the sum rate, started from the
/// matched filter with equal power.
pub fn wmmse(inst: &ProblemInstance, cfg: &WmmseConfig) -> Result<WmmseResult> {
    cfg.validate()?;
    let lm = LinkModel::from_instance(inst)?;
    let n = lm.n_links();
    let mut v = lm.matched_filter();
    let mut se = lm.sum_rate(&v)?;
    let mut trace = vec![se];
    for _ in 0..cfg.max_iters {
        let mut u = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for l in 0..n {
            let h = lm.channel(lm.links[l].tx, l).expect("own channel");
            let cov = lm.covariance(&v, l, true)?;
            let hv = h.h().matmul(&v[l])?;
            let ul = complex_solve(&cov, &hv)?;
            let e = ComplexMatrix::identity(hv.cols()).sub(&ul.h().matmul(&hv)?)?;
            let wl = hermitian_part(&complex_solve(&hermitian_part(&e), &ComplexMatrix::identity(hv.cols()))?);
            u.push(ul);
            w.push(wl);
        }
        let mut b = Vec::with_capacity(n);
        for l in 0..n {
            let h = lm.channel(lm.links[l].tx, l).expect("own channel");
            b.push(h.matmul(&u[l])?.matmul(&w[l])?);
        }
        let mut eig: Vec<(Vec<f64>, ComplexMatrix)> = Vec::with_capacity(lm.transmitters.len());
        for (t, tx) in lm.transmitters.iter().enumerate() {
            let mut a = ComplexMatrix::zeros(tx.dim, tx.dim);
            for l in 0..n {
                if let Some(h) = lm.channel(t, l) {
                    let hu = h.matmul(&u[l])?;
                    a = a.add(&hu.matmul(&w[l])?.matmul(&hu.h())?)?;
                }
            }
            let (lam, q) = hermitian_eigen(&hermitian_part(&a));
            eig.push((lam.into_iter().map(|x| x.max(0.0)).collect(), q));
        }
        let mut proj: Vec<ComplexMatrix> = Vec::with_capacity(n);
        for l in 0..n {
            proj.push(eig[lm.links[l].tx].1.h().matmul(&b[l])?);
        }
        let mut new_v = vec![ComplexMatrix::zeros(0, 0); n];
        for (grp, &budget) in lm.budgets.iter().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&l| lm.transmitters[lm.links[l].tx].group == grp).collect();
            let terms = GroupTerms {
                lambdas: members.iter().map(|&l| eig[lm.links[l].tx].0.clone()).collect(),
                weights: members
                    .iter()
                    .map(|&l| {
                        let p = &proj[l];
                        (0..p.rows())
                            .map(|r| (0..p.cols()).map(|c| p.get(r, c).norm_sqr()).sum())
                            .collect()
                    })
                    .collect(),
            };
            let mu = power_multiplier(&terms, budget, cfg)?;
            for &l in &members {
                let (lam, q) = &eig[lm.links[l].tx];
                let scale: Vec<f64> = lam.iter().map(|x| 1.0 / (x + mu)).collect();
                let scaled = ComplexMatrix::from_fn(proj[l].rows(), proj[l].cols(), |r, c| {
                    if scale[r].is_finite() {
                        proj[l].get(r, c) * scale[r]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                new_v[l] = q.matmul(&scaled)?;
            }
        }
        let new_se = lm.sum_rate(&new_v)?;
        if !new_se.is_finite() {
            return Err(CoreError::NonFinite("WMMSE sum rate".into()));
        }
        let improvement = (new_se - se) / se.abs().max(1e-12);
        v = new_v;
        se = new_se;
        trace.push(se);
        if improvement < cfg.tol {
            break;
        }
    }
    Ok(WmmseResult {
        v: lm.join_precoder(inst, &v),
        se,
        trace,
    })
}

fn equal_power_columns(v: &ComplexMatrix, per_column: f64) -> ComplexMatrix {
    let s: Vec<f64> = (0..v.cols())
        .map(|c| {
            let n = v.column_norm_sq(c);
            if n > 0.0 {
                (per_column / n).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    v.scale_columns(&s)
}

fn zf_block(h: &ComplexMatrix, per_column: f64) -> Result<ComplexMatrix> {
    if h.cols() > h.rows() {
        return Err(CoreError::Invalid(format!(
            "zero-forcing needs at most as many streams ({}) as antennas ({})",
            h.cols(),
            h.rows()
        )));
    }
    let w = unit_zf_beams(h)?;
    Ok(equal_power_columns(&w, per_column))
}

/// Zero-forcing precoder with the budget split evenly over streams (per
/// base station for CB, over all resource blocks for wideband). For power
/// allocation the beams are fixed and this returns equal amplitudes.
pub fn zero_forcing(inst: &ProblemInstance) -> Result<ComplexMatrix> {
    inst.validate()?;
    let s = inst.sizes;
    match inst.task {
        TaskKind::MuMiso | TaskKind::MuMimo => zf_block(&inst.h, inst.p_t / inst.h.cols() as f64),
        TaskKind::Wideband => {
            let per = inst.p_t / (s.n_rb * s.k) as f64;
            let mut v = ComplexMatrix::zeros(s.n_t, s.n_rb * s.k);
            for b in 0..s.n_rb {
                v.set_block(0, b * s.k, &zf_block(&inst.h.columns(b * s.k, s.k), per)?);
            }
            Ok(v)
        }
        TaskKind::CoordinatedBeamforming => {
            let per = inst.p_t / s.k as f64;
            let mut v = ComplexMatrix::zeros(s.n_t, s.m * s.k);
            for bs in 0..s.m {
                let own = inst.h.block(bs * s.n_t, bs * s.k, s.n_t, s.k);
                v.set_block(0, bs * s.k, &zf_block(&own, per)?);
            }
            Ok(v)
        }
        TaskKind::PowerAllocation => {
            let a = (inst.p_t / s.k as f64).sqrt();
            Ok(ComplexMatrix::from_fn(s.m * s.k, 1, |_, _| Complex64::new(a, 0.0)))
        }
        TaskKind::Estimation => Err(CoreError::Unsupported("estimation has no precoder".into())),
    }
}

/// Matched-filter precoder with the budget split evenly over each group's
/// links.
pub fn matched_filter(inst: &ProblemInstance) -> Result<ComplexMatrix> {
    let lm = LinkModel::from_instance(inst)?;
    Ok(lm.join_precoder(inst, &lm.matched_filter()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmmseStats {
    /// Per-user channel covariance.
    pub covariance: ComplexMatrix,
    /// Per-entry observation noise power.
    pub sigma2: f64,
}

impl LmmseStats {
    /// Sample covariance of `draws` single-user channels from `cfg`.
    pub fn estimate(cfg: &ChannelConfig, sizes: &Sizes, draws: usize, seed: u64) -> Result<LmmseStats> {
        cfg.validate()?;
        if draws == 0 {
            return invalid("covariance estimate needs at least one draw");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = sizes.n_t;
        let mut acc = ComplexMatrix::zeros(n, n);
        for _ in 0..draws {
            let h = sample_channel(&cfg.model, n, 1, 1, &mut rng);
            acc = acc.add(&h.matmul(&h.h())?)?;
        }
        Ok(LmmseStats {
            covariance: hermitian_part(&acc.scale(1.0 / draws as f64)),
            sigma2: 10f64.powf(-cfg.snr_db / 10.0),
        })
    }
}

/// `ĥ = R (R + σ² I)^{-1} y` for every column of `y`.
pub fn lmmse_estimate(y: &ComplexMatrix, stats: &LmmseStats) -> Result<ComplexMatrix> {
    let r = &stats.covariance;
    if r.rows() != y.rows() || r.cols() != r.rows() {
        return Err(CoreError::Dimension(format!(
            "covariance {}x{} for observations with {} rows",
            r.rows(),
            r.cols(),
            y.rows()
        )));
    }
    if !(stats.sigma2 > 0.0) {
        return invalid("noise power must be positive");
    }
    let a = r.add(&ComplexMatrix::identity(r.rows()).scale(stats.sigma2))?;
    r.matmul(&complex_solve(&a, y)?)
}
