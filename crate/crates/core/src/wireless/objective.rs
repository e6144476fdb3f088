//! Sum spectral efficiency, exact and on the tape, and the mapping from
//! model outputs to feasible precoders.

use std::rc::Rc;

use num_complex::Complex64;
use pemo_tensor::{Graph, Tensor, Var};

use super::links::LinkModel;
use super::{ProblemInstance, Sizes, TaskKind};
use crate::complex::ComplexMatrix;
use crate::error::{dim_err, invalid, CoreError, Result};
use crate::pe_modules::power_normalize_var;

/// Precoders on the tape.
#[derive(Clone, Copy, Debug)]
pub enum PrecoderVars {
    /// Real and imaginary parts `[B', N_t, C]`: one matrix per sample
    /// (MU-MISO, MU-MIMO), per sample and resource block (wideband) or per
    /// sample and base station (CB).
    Beams { re: Var, im: Var },
    /// Per-beam transmit powers `[B, M·K]` (power allocation).
    Powers(Var),
}

fn check_batch(instances: &[ProblemInstance]) -> Result<(TaskKind, Sizes)> {
    let first = instances.first().ok_or_else(|| CoreError::Invalid("empty batch".into()))?;
    for i in instances {
        if i.task != first.task || i.sizes != first.sizes {
            return invalid("a batch must hold one task at one size");
        }
        i.validate()?;
    }
    Ok((first.task, first.sizes))
}

/// Gather from `[G, T, N, J]` of the given `(g, t, n, j)` positions, in
/// order.
fn gather4(g: &mut Graph, x: Var, positions: &[[usize; 4]], shape: &[usize]) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let idx: Vec<usize> = positions
        .iter()
        .map(|p| ((p[0] * s[1] + p[1]) * s[2] + p[2]) * s[3] + p[3])
        .collect();
    Ok(g.gather(x, Rc::from(idx), shape)?)
}

/// `[G', C, N, 2]` feature tensor to `[G', N, C]` real and imaginary parts.
fn split_beams(g: &mut Graph, y: Var) -> Result<(Var, Var)> {
    let [gg, c, n, _] = match *g.shape(y) {
        [a, b, c, d] => [a, b, c, d],
        ref s => return dim_err(format!("beam tensor {s:?}")),
    };
    let mut part = |f: usize| -> Result<Var> {
        let p = g.slice(y, 3, f, 1)?;
        let p = g.reshape(p, &[gg, c, n])?;
        Ok(g.transpose(p)?)
    };
    let re = part(0)?;
    let im = part(1)?;
    Ok((re, im))
}

/// Maps a model output `[G, T, N, J]` (after its head) to precoders that
/// meet the power budget with equality.
pub fn normalized_precoders(
    g: &mut Graph,
    task: TaskKind,
    s: &Sizes,
    batch: usize,
    p_t: f64,
    out: Var,
) -> Result<PrecoderVars> {
    let shape = g.shape(out).to_vec();
    let expect = |gg: usize, t: usize, n: usize| -> Result<()> {
        if shape.len() != 4 || shape[0] != gg || shape[1] != t || shape[2] != n || shape[3] < 2 && task != TaskKind::PowerAllocation {
            return dim_err(format!("{task} output {shape:?}, expected [{gg},{t},{n},J]"));
        }
        Ok(())
    };
    match task {
        TaskKind::MuMiso | TaskKind::MuMimo | TaskKind::Wideband => {
            let (gg, t) = match task {
                TaskKind::MuMiso => (batch, s.k),
                TaskKind::MuMimo => (batch, s.k * s.n_r),
                _ => (batch * s.n_rb, s.k),
            };
            expect(gg, t, s.n_t)?;
            let y = if shape[3] == 2 { out } else { g.slice(out, 3, 0, 2)? };
            let y = power_normalize_var(g, y, batch, p_t)?;
            let (re, im) = split_beams(g, y)?;
            Ok(PrecoderVars::Beams { re, im })
        }
        TaskKind::CoordinatedBeamforming => {
            let (m, k) = (s.m, s.k);
            expect(batch * m, m * k, s.n_t)?;
            let mut pos = Vec::with_capacity(batch * m * k * s.n_t * 2);
            for gi in 0..batch * m {
                let bs = gi % m;
                for kk in 0..k {
                    for n in 0..s.n_t {
                        for f in 0..2 {
                            pos.push([gi, bs * k + kk, n, f]);
                        }
                    }
                }
            }
            let y = gather4(g, out, &pos, &[batch * m, k, s.n_t, 2])?;
            let y = power_normalize_var(g, y, batch * m, p_t)?;
            let (re, im) = split_beams(g, y)?;
            Ok(PrecoderVars::Beams { re, im })
        }
        TaskKind::PowerAllocation => {
            let (m, k) = (s.m, s.k);
            expect(batch * m, m * k, k)?;
            let mut pos = Vec::with_capacity(batch * m * k);
            for gi in 0..batch * m {
                let bs = gi % m;
                for kk in 0..k {
                    pos.push([gi, bs * k + kk, kk, 0]);
                }
            }
            let a = gather4(g, out, &pos, &[batch * m, k])?;
            let a = g.softplus(a);
            let a = power_normalize_var(g, a, batch * m, p_t)?;
            let p = g.square(a);
            Ok(PrecoderVars::Powers(g.reshape(p, &[batch, m * k])?))
        }
        TaskKind::Estimation => Err(CoreError::Unsupported("estimation has no precoders".into())),
    }
}

/// Constant `[B', R, N_t]` real and imaginary parts of `H^H` blocks.
fn channel_hermitian(g: &mut Graph, blocks: &[ComplexMatrix]) -> Result<(Var, Var)> {
    let (n, r) = (blocks[0].rows(), blocks[0].cols());
    let mut re = Vec::with_capacity(blocks.len() * n * r);
    let mut im = Vec::with_capacity(blocks.len() * n * r);
    for b in blocks {
        for c in 0..r {
            for row in 0..n {
                re.push(b.re[(row, c)]);
                im.push(-b.im[(row, c)]);
            }
        }
    }
    let shape = vec![blocks.len(), r, n];
    Ok((g.constant(Tensor::new(shape.clone(), re)?), g.constant(Tensor::new(shape, im)?)))
}

/// `(A_re + jA_im)(B_re + jB_im)` with batched matmuls.
fn complex_matmul(g: &mut Graph, a: (Var, Var), b: (Var, Var)) -> Result<(Var, Var)> {
    let rr = g.matmul(a.0, b.0)?;
    let ii = g.matmul(a.1, b.1)?;
    let ri = g.matmul(a.0, b.1)?;
    let ir = g.matmul(a.1, b.0)?;
    Ok((g.sub(rr, ii)?, g.add(ri, ir)?))
}

fn abs_sq(g: &mut Graph, z: (Var, Var)) -> Result<Var> {
    let a = g.square(z.0);
    let b = g.square(z.1);
    Ok(g.add(a, b)?)
}

/// Rates `[B', K]` of single-antenna receivers from received powers
/// `P[b, rx, tx]` with the desired signal on the diagonal.
fn single_antenna_rates(g: &mut Graph, p: Var, sigma2: &[f64]) -> Result<Var> {
    let [b, k, k2] = match *g.shape(p) {
        [a, b, c] => [a, b, c],
        ref s => return dim_err(format!("power tensor {s:?}")),
    };
    if k != k2 || sigma2.len() != b {
        return dim_err("received powers must be square with one noise power per batch entry");
    }
    let off: Vec<f64> = (0..b * k * k).map(|i| if (i / k) % k == i % k { 0.0 } else { 1.0 }).collect();
    let off = g.constant(Tensor::new(vec![b, k, k], off)?);
    let noise: Vec<f64> = sigma2.iter().flat_map(|&s| std::iter::repeat(s).take(k)).collect();
    let noise = g.constant(Tensor::new(vec![b, k], noise)?);
    let total = g.sum_axis(p, 2)?;
    let pi = g.mul(p, off)?;
    let interference = g.sum_axis(pi, 2)?;
    let num = g.add(total, noise)?;
    let den = g.add(interference, noise)?;
    let ln_num = g.log(num)?;
    let ln_den = g.log(den)?;
    let d = g.sub(ln_num, ln_den)?;
    Ok(g.scale(d, 1.0 / std::f64::consts::LN_2))
}

/// Log-determinants `[B]` of symmetric positive definite `[B, n, n]`
/// matrices through a Cholesky factorization recorded on the tape.
pub fn spd_logdet_var(g: &mut Graph, a: Var) -> Result<Var> {
    let [b, n, n2] = match *g.shape(a) {
        [x, y, z] => [x, y, z],
        ref s => return dim_err(format!("logdet input {s:?}")),
    };
    if n != n2 || n == 0 {
        return dim_err("logdet input must be square");
    }
    let entry = |g: &mut Graph, i: usize, j: usize| -> Result<Var> {
        let idx: Vec<usize> = (0..b).map(|bb| (bb * n + i) * n + j).collect();
        Ok(g.gather(a, Rc::from(idx), &[b])?)
    };
    let mut l: Vec<Vec<Option<Var>>> = vec![vec![None; n]; n];
    let mut logdet: Option<Var> = None;
    for j in 0..n {
        let mut pivot = entry(g, j, j)?;
        for kk in 0..j {
            let ljk = l[j][kk].expect("computed");
            let sq = g.square(ljk);
            pivot = g.sub(pivot, sq)?;
        }
        let lp = g
            .log(pivot)
            .map_err(|_| CoreError::Invalid(format!("matrix is not positive definite at pivot {j}")))?;
        logdet = Some(match logdet {
            None => lp,
            Some(acc) => g.add(acc, lp)?,
        });
        let root = g.sqrt(pivot)?;
        l[j][j] = Some(root);
        if j + 1 < n {
            let inv = g.reciprocal(root)?;
            for i in j + 1..n {
                let mut s = entry(g, i, j)?;
                for kk in 0..j {
                    let prod = g.mul(l[i][kk].expect("computed"), l[j][kk].expect("computed"))?;
                    s = g.sub(s, prod)?;
                }
                l[i][j] = Some(g.mul(s, inv)?);
            }
        }
    }
    Ok(logdet.expect("n > 0"))
}

/// `X X^H` for `X = (re, im)` of shape `[B, r, c]`.
fn gram(g: &mut Graph, x: (Var, Var)) -> Result<(Var, Var)> {
    let rt = g.transpose(x.0)?;
    let it = g.transpose(x.1)?;
    let a = g.matmul(x.0, rt)?;
    let b = g.matmul(x.1, it)?;
    let c = g.matmul(x.1, rt)?;
    let d = g.matmul(x.0, it)?;
    Ok((g.add(a, b)?, g.sub(c, d)?))
}

/// Natural-log determinant `[B]` of Hermitian `σ²I + (re + j im)`, as half the
/// log-determinant of the real embedding.
fn hermitian_logdet_var(g: &mut Graph, c: (Var, Var), sigma2: &[f64]) -> Result<Var> {
    let [b, n, _] = match *g.shape(c.0) {
        [x, y, z] => [x, y, z],
        ref s => return dim_err(format!("covariance {s:?}")),
    };
    let mut eye = Vec::with_capacity(b * n * n);
    for &s in sigma2 {
        for i in 0..n {
            for j in 0..n {
                eye.push(if i == j { s } else { 0.0 });
            }
        }
    }
    let eye = g.constant(Tensor::new(vec![b, n, n], eye)?);
    let re = g.add(c.0, eye)?;
    let neg_im = g.neg(c.1);
    let top = g.concat(&[re, neg_im], 2)?;
    let bottom = g.concat(&[c.1, re], 2)?;
    let emb = g.concat(&[top, bottom], 1)?;
    let ld = spd_logdet_var(g, emb)?;
    Ok(g.scale(ld, 0.5))
}

/// Sum rate per sample `[B]` for precoders on the tape.
pub fn se_var(g: &mut Graph, instances: &[ProblemInstance], v: PrecoderVars) -> Result<Var> {
    let (task, s) = check_batch(instances)?;
    let batch = instances.len();
    let sig: Vec<f64> = instances.iter().map(|i| i.sigma2).collect();
    match (task, v) {
        (TaskKind::MuMiso, PrecoderVars::Beams { re, im }) => {
            let blocks: Vec<ComplexMatrix> = instances.iter().map(|i| i.h.clone()).collect();
            let hh = channel_hermitian(g, &blocks)?;
            let a = complex_matmul(g, hh, (re, im))?;
            let p = abs_sq(g, a)?;
            let r = single_antenna_rates(g, p, &sig)?;
            Ok(g.sum_axis(r, 1)?)
        }
        (TaskKind::Wideband, PrecoderVars::Beams { re, im }) => {
            let mut blocks = Vec::with_capacity(batch * s.n_rb);
            let mut sig_rb = Vec::with_capacity(batch * s.n_rb);
            for i in instances {
                for b in 0..s.n_rb {
                    blocks.push(i.h.columns(b * s.k, s.k));
                    sig_rb.push(i.sigma2);
                }
            }
            let hh = channel_hermitian(g, &blocks)?;
            let a = complex_matmul(g, hh, (re, im))?;
            let p = abs_sq(g, a)?;
            let r = single_antenna_rates(g, p, &sig_rb)?;
            let r = g.reshape(r, &[batch, s.n_rb * s.k])?;
            Ok(g.sum_axis(r, 1)?)
        }
        (TaskKind::MuMimo, PrecoderVars::Beams { re, im }) => {
            let (k, nr) = (s.k, s.n_r);
            let blocks: Vec<ComplexMatrix> = instances.iter().map(|i| i.h.clone()).collect();
            let hh = channel_hermitian(g, &blocks)?;
            // a[b, (k, r), (j, q)] = (H_k^H V_j)[r, q]
            let a = complex_matmul(g, hh, (re, im))?;
            let rows = (g.reshape(a.0, &[batch * k, nr, k * nr])?, g.reshape(a.1, &[batch * k, nr, k * nr])?);
            let all = gram(g, rows)?;
            let mut idx = Vec::with_capacity(batch * k * nr * nr);
            for b in 0..batch {
                for kk in 0..k {
                    for r in 0..nr {
                        for q in 0..nr {
                            idx.push(((b * k + kk) * nr + r) * (k * nr) + kk * nr + q);
                        }
                    }
                }
            }
            let idx: Rc<[usize]> = idx.into();
            let own = (
                g.gather(a.0, idx.clone(), &[batch * k, nr, nr])?,
                g.gather(a.1, idx, &[batch * k, nr, nr])?,
            );
            let own = gram(g, own)?;
            let rest = (g.sub(all.0, own.0)?, g.sub(all.1, own.1)?);
            let sig_k: Vec<f64> = sig.iter().flat_map(|&x| std::iter::repeat(x).take(k)).collect();
            let ld_all = hermitian_logdet_var(g, all, &sig_k)?;
            let ld_rest = hermitian_logdet_var(g, rest, &sig_k)?;
            let d = g.sub(ld_all, ld_rest)?;
            let d = g.scale(d, 1.0 / std::f64::consts::LN_2);
            let d = g.reshape(d, &[batch, k])?;
            Ok(g.sum_axis(d, 1)?)
        }
        (TaskKind::CoordinatedBeamforming, PrecoderVars::Beams { re, im }) => {
            let (m, k, nt) = (s.m, s.k, s.n_t);
            let mut blocks = Vec::with_capacity(batch * m);
            for i in instances {
                for bs in 0..m {
                    blocks.push(i.h.block(bs * nt, 0, nt, m * k));
                }
            }
            let hh = channel_hermitian(g, &blocks)?;
            // part[(b, m'), u, j] = h_{m', u}^H v_{m', j}
            let a = complex_matmul(g, hh, (re, im))?;
            let part = abs_sq(g, a)?;
            let mk = m * k;
            let mut idx = Vec::with_capacity(batch * mk * mk);
            for b in 0..batch {
                for u in 0..mk {
                    for t in 0..mk {
                        let (bs, j) = (t / k, t % k);
                        idx.push(((b * m + bs) * mk + u) * k + j);
                    }
                }
            }
            let p = g.gather(part, idx.into(), &[batch, mk, mk])?;
            let r = single_antenna_rates(g, p, &sig)?;
            Ok(g.sum_axis(r, 1)?)
        }
        (TaskKind::PowerAllocation, PrecoderVars::Powers(p)) => {
            let mk = s.m * s.k;
            let mut gains = Vec::with_capacity(batch * mk * mk);
            for i in instances {
                for u in 0..mk {
                    for t in 0..mk {
                        gains.push(i.h.get(t, u).norm_sqr());
                    }
                }
            }
            let gains = g.constant(Tensor::new(vec![batch, mk, mk], gains)?);
            let idx: Vec<usize> = (0..batch * mk * mk).map(|i| (i / (mk * mk)) * mk + i % mk).collect();
            let pb = g.gather(p, idx.into(), &[batch, mk, mk])?;
            let rx = g.mul(gains, pb)?;
            let r = single_antenna_rates(g, rx, &sig)?;
            Ok(g.sum_axis(r, 1)?)
        }
        (TaskKind::Estimation, _) => Err(CoreError::Unsupported("estimation has no rate objective".into())),
        (t, _) => invalid(format!("precoder kind does not match task {t}")),
    }
}

/// Tape precoders holding given instance-layout precoders as constants.
fn precoder_constants(g: &mut Graph, instances: &[ProblemInstance], vs: &[ComplexMatrix]) -> Result<PrecoderVars> {
    let (task, s) = check_batch(instances)?;
    if vs.len() != instances.len() {
        return dim_err("one precoder per instance");
    }
    for (inst, v) in instances.iter().zip(vs) {
        let (r, c) = inst.precoder_shape();
        if v.rows() != r || v.cols() != c {
            return dim_err(format!("precoder is {}x{}, expected {r}x{c}", v.rows(), v.cols()));
        }
        if !v.is_finite() {
            return Err(CoreError::NonFinite("precoder".into()));
        }
    }
    if task == TaskKind::PowerAllocation {
        let p: Vec<f64> = vs.iter().flat_map(|v| (0..v.rows()).map(|r| v.get(r, 0).norm_sqr())).collect();
        return Ok(PrecoderVars::Powers(g.constant(Tensor::new(vec![vs.len(), s.m * s.k], p)?)));
    }
    let (per, cols) = match task {
        TaskKind::Wideband => (s.n_rb, s.k),
        TaskKind::CoordinatedBeamforming => (s.m, s.k),
        _ => (1, vs[0].cols()),
    };
    let nt = vs[0].rows();
    let mut re = Vec::new();
    let mut im = Vec::new();
    for v in vs {
        for p in 0..per {
            for r in 0..nt {
                for c in 0..cols {
                    let z = v.get(r, p * cols + c);
                    re.push(z.re);
                    im.push(z.im);
                }
            }
        }
    }
    let shape = vec![vs.len() * per, nt, cols];
    Ok(PrecoderVars::Beams {
        re: g.constant(Tensor::new(shape.clone(), re)?),
        im: g.constant(Tensor::new(shape, im)?),
    })
}

/// Reads tape precoders back into instance layout.
fn precoder_values(g: &Graph, instances: &[ProblemInstance], v: PrecoderVars) -> Result<Vec<ComplexMatrix>> {
    let (task, s) = check_batch(instances)?;
    match v {
        PrecoderVars::Powers(p) => {
            let mk = s.m * s.k;
            let d = g.data(p);
            Ok((0..instances.len())
                .map(|b| ComplexMatrix::from_fn(mk, 1, |r, _| Complex64::new(d[b * mk + r].sqrt(), 0.0)))
                .collect())
        }
        PrecoderVars::Beams { re, im } => {
            let shape = g.shape(re).to_vec();
            let (nt, cols) = (shape[1], shape[2]);
            let per = shape[0] / instances.len();
            let (dr, di) = (g.data(re), g.data(im));
            let _ = task;
            Ok((0..instances.len())
                .map(|b| {
                    ComplexMatrix::from_fn(nt, per * cols, |r, c| {
                        let (p, cc) = (c / cols, c % cols);
                        let i = (((b * per + p) * nt) + r) * cols + cc;
                        Complex64::new(dr[i], di[i])
                    })
                })
                .collect())
        }
    }
}

/// Precoders implied by a model output tensor, in instance layout.
pub fn precoders_from_output(instances: &[ProblemInstance], out: &Tensor) -> Result<Vec<ComplexMatrix>> {
    let (task, s) = check_batch(instances)?;
    let mut g = Graph::new();
    let x = g.constant(out.clone());
    let v = normalized_precoders(&mut g, task, &s, instances.len(), instances[0].p_t, x)?;
    precoder_values(&g, instances, v)
}

/// Sum spectral efficiency of `v` on `inst`. The differentiable path runs
/// on the tape; the other forms every interference covariance explicitly.
pub fn se_objective(inst: &ProblemInstance, v: &ComplexMatrix, differentiable: bool) -> Result<f64> {
    if differentiable {
        let mut g = Graph::new();
        let insts = std::slice::from_ref(inst);
        let pv = precoder_constants(&mut g, insts, std::slice::from_ref(v))?;
        let se = se_var(&mut g, insts, pv)?;
        Ok(g.data(se)[0])
    } else {
        let lm = LinkModel::from_instance(inst)?;
        let parts = lm.split_precoder(inst, v)?;
        lm.sum_rate(&parts)
    }
}

/// Per-entry complex mean squared error `[1]` between an estimator output
/// `[B, K, N_t, 2]` and the labels.
pub fn estimation_mse_var(g: &mut Graph, instances: &[ProblemInstance], out: Var) -> Result<Var> {
    let (task, s) = check_batch(instances)?;
    if task != TaskKind::Estimation {
        return invalid("mean squared error needs labelled estimation instances");
    }
    let b = instances.len();
    let expected = [b, s.k, s.n_t, 2];
    if g.shape(out) != expected {
        return dim_err(format!("estimator output {:?}, expected {expected:?}", g.shape(out)));
    }
    let mut lab = Vec::with_capacity(b * s.k * s.n_t * 2);
    for i in instances {
        let h = i.labels.as_ref().ok_or_else(|| CoreError::Invalid("estimation instance without label".into()))?;
        for k in 0..s.k {
            for n in 0..s.n_t {
                let z = h.get(n, k);
                lab.push(z.re);
                lab.push(z.im);
            }
        }
    }
    let lab = g.constant(Tensor::new(expected.to_vec(), lab)?);
    let d = g.sub(out, lab)?;
    let sq = g.square(d);
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / (b * s.k * s.n_t) as f64))
}

/// Per-entry complex mean squared error of estimates in channel layout.
pub fn estimation_mse(instances: &[ProblemInstance], estimates: &[ComplexMatrix]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, e) in instances.iter().zip(estimates) {
        let h = i.labels.as_ref().ok_or_else(|| CoreError::Invalid("estimation instance without label".into()))?;
        if e.rows() != h.rows() || e.cols() != h.cols() {
            return dim_err("estimate shape differs from the label");
        }
        total += e.sub(h)?.frobenius_sq();
        count += h.rows() * h.cols();
    }
    if count == 0 {
        return invalid("no estimation instances");
    }
    Ok(total / count as f64)
}

/// Training loss of a batch: negative mean sum rate for precoding tasks,
/// mean squared error for estimation.
pub fn task_loss_var(g: &mut Graph, instances: &[ProblemInstance], out: Var) -> Result<Var> {
    let (task, s) = check_batch(instances)?;
    if task == TaskKind::Estimation {
        return estimation_mse_var(g, instances, out);
    }
    let v = normalized_precoders(g, task, &s, instances.len(), instances[0].p_t, out)?;
    let se = se_var(g, instances, v)?;
    let total = g.sum(se);
    Ok(g.scale(total, -1.0 / instances.len() as f64))
}
