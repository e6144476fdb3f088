//! Generic downlink interference model used by the exact objective and the
//! WMMSE oracle. Every task reduces to transmitters with power groups and
//! links (receivers) with per-link precoders.

use num_complex::Complex64;

use super::{ProblemInstance, TaskKind};
use crate::complex::{logdet_hermitian, ComplexMatrix};
use crate::error::{dim_err, CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transmitter {
    pub dim: usize,
    pub group: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub tx: usize,
    /// Receive antennas, equal to the number of streams.
    pub rx_dim: usize,
}

/// `y_l = Σ_j H(tx_j, l)^H V_j s_j + n_l` over links `j` whose transmitter
/// reaches receiver `l`.
#[derive(Clone, Debug)]
pub struct LinkModel {
    pub transmitters: Vec<Transmitter>,
    pub links: Vec<Link>,
    /// `channels[t][l]`: `tx_dim x rx_dim` channel from transmitter `t` to
    /// the receiver of link `l`, absent when they do not interact.
    pub channels: Vec<Vec<Option<ComplexMatrix>>>,
    pub sigma2: f64,
    /// Budget per power group.
    pub budgets: Vec<f64>,
}

impl LinkModel {
    pub fn from_instance(inst: &ProblemInstance) -> Result<LinkModel> {
        inst.validate()?;
        let s = inst.sizes;
        let h = &inst.h;
        let (transmitters, links, channels, budgets) = match inst.task {
            TaskKind::MuMiso | TaskKind::MuMimo => {
                let nr = if inst.task == TaskKind::MuMimo { s.n_r } else { 1 };
                let links: Vec<Link> = (0..s.k).map(|_| Link { tx: 0, rx_dim: nr }).collect();
                let row = (0..s.k).map(|k| Some(h.columns(k * nr, nr))).collect();
                (vec![Transmitter { dim: s.n_t, group: 0 }], links, vec![row], vec![inst.p_t])
            }
            TaskKind::CoordinatedBeamforming => {
                let mk = s.m * s.k;
                let tx = (0..s.m).map(|m| Transmitter { dim: s.n_t, group: m }).collect();
                let links = (0..mk).map(|u| Link { tx: u / s.k, rx_dim: 1 }).collect();
                let channels = (0..s.m)
                    .map(|bs| (0..mk).map(|u| Some(h.block(bs * s.n_t, u, s.n_t, 1))).collect())
                    .collect();
                (tx, links, channels, vec![inst.p_t; s.m])
            }
            TaskKind::PowerAllocation => {
                // Each beam is its own scalar transmitter; beams of one base
                // station share a budget.
                let mk = s.m * s.k;
                let tx = (0..mk).map(|u| Transmitter { dim: 1, group: u / s.k }).collect();
                let links = (0..mk).map(|u| Link { tx: u, rx_dim: 1 }).collect();
                let channels = (0..mk)
                    .map(|src| {
                        (0..mk)
                            .map(|dst| {
                                let g = h.get(src, dst);
                                Some(ComplexMatrix::from_fn(1, 1, |_, _| g.conj()))
                            })
                            .collect()
                    })
                    .collect();
                (tx, links, channels, vec![inst.p_t; s.m])
            }
            TaskKind::Wideband => {
                let n = s.n_rb * s.k;
                let tx = (0..s.n_rb).map(|_| Transmitter { dim: s.n_t, group: 0 }).collect();
                let links = (0..n).map(|u| Link { tx: u / s.k, rx_dim: 1 }).collect();
                let channels = (0..s.n_rb)
                    .map(|b| {
                        (0..n)
                            .map(|u| if u / s.k == b { Some(h.columns(u, 1)) } else { None })
                            .collect()
                    })
                    .collect();
                (tx, links, channels, vec![inst.p_t])
            }
            TaskKind::Estimation => {
                return Err(CoreError::Unsupported("estimation has no rate objective".into()));
            }
        };
        Ok(LinkModel {
            transmitters,
            links,
            channels,
            sigma2: inst.sigma2,
            budgets,
        })
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn channel(&self, t: usize, l: usize) -> Option<&ComplexMatrix> {
        self.channels[t][l].as_ref()
    }

    /// Splits an instance-layout precoder into per-link `tx_dim x rx_dim`
    /// blocks.
    pub fn split_precoder(&self, inst: &ProblemInstance, v: &ComplexMatrix) -> Result<Vec<ComplexMatrix>> {
        let (r, c) = inst.precoder_shape();
        if v.rows() != r || v.cols() != c {
            return dim_err(format!("precoder is {}x{}, expected {r}x{c}", v.rows(), v.cols()));
        }
        if !v.is_finite() {
            return Err(CoreError::NonFinite("precoder".into()));
        }
        let mut col = 0;
        let mut out = Vec::with_capacity(self.links.len());
        for (l, link) in self.links.iter().enumerate() {
            let blk = if inst.task == TaskKind::PowerAllocation {
                v.block(l, 0, 1, 1)
            } else {
                let b = v.columns(col, link.rx_dim);
                col += link.rx_dim;
                b
            };
            out.push(blk);
        }
        Ok(out)
    }

    /// Joins per-link blocks back into the instance layout.
    pub fn join_precoder(&self, inst: &ProblemInstance, parts: &[ComplexMatrix]) -> ComplexMatrix {
        let (r, c) = inst.precoder_shape();
        let mut v = ComplexMatrix::zeros(r, c);
        let mut col = 0;
        for (l, p) in parts.iter().enumerate() {
            if inst.task == TaskKind::PowerAllocation {
                v.set(l, 0, p.get(0, 0));
            } else {
                v.set_block(0, col, p);
                col += p.cols();
            }
        }
        v
    }

    /// `Σ_j H^H V_j V_j^H H` at receiver `l`, with or without link `l`
    /// itself, plus `σ² I`.
    pub fn covariance(&self, v: &[ComplexMatrix], l: usize, include_own: bool) -> Result<ComplexMatrix> {
        let n = self.links[l].rx_dim;
        let mut cov = ComplexMatrix::identity(n).scale(self.sigma2);
        for (j, link) in self.links.iter().enumerate() {
            if j == l && !include_own {
                continue;
            }
            if let Some(h) = self.channel(link.tx, l) {
                let a = h.h().matmul(&v[j])?;
                cov = cov.add(&a.matmul(&a.h())?)?;
            }
        }
        // Exact Hermitian symmetry for the logdet check.
        let sym = ComplexMatrix::from_fn(n, n, |r, c| (cov.get(r, c) + cov.get(c, r).conj()) * 0.5);
        Ok(sym)
    }

    /// Per-link rates in bit/s/Hz.
    pub fn rates(&self, v: &[ComplexMatrix]) -> Result<Vec<f64>> {
        if v.len() != self.links.len() {
            return dim_err(format!("{} precoders for {} links", v.len(), self.links.len()));
        }
        let mut out = Vec::with_capacity(v.len());
        for l in 0..self.links.len() {
            let all = logdet_hermitian(&self.covariance(v, l, true)?)?;
            let rest = logdet_hermitian(&self.covariance(v, l, false)?)?;
            out.push((all - rest) / std::f64::consts::LN_2);
        }
        Ok(out)
    }

    pub fn sum_rate(&self, v: &[ComplexMatrix]) -> Result<f64> {
        Ok(self.rates(v)?.iter().sum())
    }

    /// Transmit power of each group.
    pub fn group_powers(&self, v: &[ComplexMatrix]) -> Vec<f64> {
        let mut p = vec![0.0; self.budgets.len()];
        for (l, link) in self.links.iter().enumerate() {
            p[self.transmitters[link.tx].group] += v[l].frobenius_sq();
        }
        p
    }

    /// Matched-filter precoders with the budget split evenly over each
    /// group's links.
    pub fn matched_filter(&self) -> Vec<ComplexMatrix> {
        let mut count = vec![0usize; self.budgets.len()];
        for link in &self.links {
            count[self.transmitters[link.tx].group] += 1;
        }
        self.links
            .iter()
            .enumerate()
            .map(|(l, link)| {
                let g = self.transmitters[link.tx].group;
                let h = self.channel(link.tx, l).expect("own channel exists");
                let norm = h.frobenius_sq();
                let target = self.budgets[g] / count[g] as f64;
                if norm > 0.0 {
                    h.scale((target / norm).sqrt())
                } else {
                    let mut e = ComplexMatrix::zeros(h.rows(), h.cols());
                    e.set(0, 0, Complex64::new(target.sqrt(), 0.0));
                    e
                }
            })
            .collect()
    }
}
