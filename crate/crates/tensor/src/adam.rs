use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Adam optimizer state for a fixed, ordered list of parameters.
///
/// Moments are allocated lazily on the first update of each parameter.
/// Each parameter keeps its own bias-correction counter so that updating
/// only a subset (one task's modules in a shared pool) leaves the moments
/// of the others untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    param_steps: Vec<u64>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self::with_betas(learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            m: Vec::new(),
            v: Vec::new(),
            param_steps: Vec::new(),
        }
    }

    pub fn first_moment(&self, index: usize) -> Option<&[f64]> {
        self.m.get(index).filter(|m| !m.is_empty()).map(Vec::as_slice)
    }

    pub fn second_moment(&self, index: usize) -> Option<&[f64]> {
        self.v.get(index).filter(|v| !v.is_empty()).map(Vec::as_slice)
    }

    fn ensure(&mut self, count: usize) {
        if self.m.len() < count {
            self.m.resize(count, Vec::new());
            self.v.resize(count, Vec::new());
            self.param_steps.resize(count, 0);
        }
    }

    fn update_one(&mut self, index: usize, p: &mut Tensor) {
        let g = p.grad().expect("checked by caller").to_vec();
        if self.m[index].len() != g.len() {
            self.m[index] = vec![0.0; g.len()];
            self.v[index] = vec![0.0; g.len()];
            self.param_steps[index] = 0;
        }
        self.param_steps[index] += 1;
        let t = self.param_steps[index] as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let m = &mut self.m[index];
        let v = &mut self.v[index];
        for (((x, gi), mi), vi) in p.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.zero_grad();
    }
}

/// One Adam update of every parameter in `params`, then zeroes their grads.
pub fn adam_step(params: &mut [Tensor], state: &mut AdamState) -> Result<()> {
    let all: Vec<usize> = (0..params.len()).collect();
    adam_step_subset(params, &all, state)
}

/// Adam update restricted to `active` indices of `params`; the rest are not
/// read or written.
pub fn adam_step_subset(params: &mut [Tensor], active: &[usize], state: &mut AdamState) -> Result<()> {
    for &i in active {
        let p = params.get(i).ok_or(TensorError::UnknownVar(i))?;
        if p.grad().is_none() {
            return Err(TensorError::MissingGrad(i));
        }
    }
    state.ensure(params.len());
    for &i in active {
        state.update_one(i, &mut params[i]);
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param_with_grad(values: Vec<f64>, grad: f64) -> Tensor {
        let n = values.len();
        let mut p = Tensor::new(vec![n], values).unwrap().into_param();
        p.accumulate_grad(&vec![grad; n]).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![param_with_grad(vec![0.5, -1.0], 1.0)];
        let mut st = AdamState::with_betas(0.01, 0.9, 0.999, 1e-12);
        adam_step(&mut params, &mut st).unwrap();
        assert!((params[0].data()[0] - 0.49).abs() < 1e-9);
        assert!((params[0].data()[1] + 1.01).abs() < 1e-9);
        assert_eq!(params[0].grad().unwrap(), &[0.0, 0.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn two_constant_steps() {
        let mut params = vec![param_with_grad(vec![0.0], 1.0)];
        let mut st = AdamState::new(0.002);
        adam_step(&mut params, &mut st).unwrap();
        params[0].accumulate_grad(&[1.0]).unwrap();
        adam_step(&mut params, &mut st).unwrap();
        // Hand recurrence: m1=0.1, v1=0.001, m2=0.19, v2=0.001999.
        let mut x = 0.0;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1;
            v = 0.999 * v + 0.001;
            x -= 0.002 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((params[0].data()[0] - x).abs() < 1e-15);
        assert!((x + 0.004).abs() < 1e-8);
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut params = vec![param_with_grad(vec![1.0, 2.0, 3.0], 0.0)];
        let mut st = AdamState::new(0.1);
        for _ in 0..5 {
            params[0].accumulate_grad(&[0.0; 3]).unwrap();
            adam_step(&mut params, &mut st).unwrap();
        }
        assert_eq!(params[0].data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_grad_rejected() {
        let mut params = vec![Tensor::zeros(&[2]).into_param()];
        let mut st = AdamState::new(0.1);
        assert_eq!(adam_step(&mut params, &mut st), Err(TensorError::MissingGrad(0)));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn subset_update_leaves_others() {
        let mut params = vec![param_with_grad(vec![1.0], 1.0), Tensor::full(&[2], 4.0).into_param()];
        let mut st = AdamState::new(0.1);
        adam_step_subset(&mut params, &[0], &mut st).unwrap();
        assert_eq!(params[1].data(), &[4.0, 4.0]);
        assert!(st.first_moment(1).is_none());
        assert!(params[0].data()[0] < 1.0);
    }
}
