use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Compares the tape gradient of a scalar function against central
/// differences and returns the largest relative error over coordinates.
///
/// `f` receives a fresh graph and the leaf holding `x`, and returns the
/// scalar output node.
pub fn finite_difference_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    assert!(step > 0.0, "finite difference step must be positive");
    let mut g = Graph::new();
    let xv = g.param(x);
    let out = f(&mut g, xv)?;
    g.backward(out)?;
    let analytic = g.grad(xv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |values: Vec<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(Tensor::new(x.shape().to_vec(), values)?);
        let out = f(&mut g, v)?;
        Ok(g.item(out))
    };
    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.data().to_vec();
        plus[i] += step;
        let mut minus = x.data().to_vec();
        minus[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / (numeric.abs() + 1e-12);
        if err.is_nan() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
