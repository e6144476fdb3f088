use crate::complex::{complex_solve, ComplexMatrix};
use crate::error::{dim_err, invalid, Result};

/// Precoders from per-user downlink powers `p` and uplink powers `lambda`:
/// column `k` is `sqrt(p_k)` times the unit-norm direction of
/// `(I + H Λ H^H / σ²)^{-1} h_k`.
pub fn duality_recover(h: &ComplexMatrix, p: &[f64], lambda: &[f64], sigma2: f64, p_t: f64) -> Result<ComplexMatrix> {
    let (n, k) = (h.rows(), h.cols());
    if p.len() != k || lambda.len() != k {
        return dim_err(format!("{k} users but {} powers and {} dual powers", p.len(), lambda.len()));
    }
    if p.iter().chain(lambda).any(|&x| !(x > 0.0)) {
        return invalid("powers must be positive");
    }
    if !(sigma2 > 0.0) || !(p_t > 0.0) {
        return invalid("noise power and budget must be positive");
    }
    let tol = 1e-9 * p_t.max(1.0);
    let (sp, sl): (f64, f64) = (p.iter().sum(), lambda.iter().sum());
    if (sp - p_t).abs() > tol || (sl - p_t).abs() > tol {
        return invalid(format!("powers sum to {sp} and {sl}, budget is {p_t}"));
    }
    let weighted = h.scale_columns(&lambda.iter().map(|l| l / sigma2).collect::<Vec<_>>());
    let a = ComplexMatrix::identity(n).add(&weighted.matmul(&h.h())?)?;
    let dirs = complex_solve(&a, h)?;
    let scales: Vec<f64> = (0..k).map(|c| (p[c] / dirs.column_norm_sq(c)).sqrt()).collect();
    Ok(dirs.scale_columns(&scales))
}
