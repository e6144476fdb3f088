//! Dense f64 tensors, a reverse-mode differentiation tape, and Adam.
//!
//! Values are copied into the tape when recorded, so a [`Graph`] never
//! aliases the tensors it was built from. Trainable tensors are recorded with
//! [`Graph::param`] and receive their gradients back through
//! [`Tensor::accumulate_grad`] after [`Graph::backward`].

mod adam;
mod error;
mod gradcheck;
mod graph;
mod kernels;
mod tensor;
mod weights;

pub use adam::{adam_step, adam_step_subset, AdamState};
pub use error::{Result, TensorError};
pub use gradcheck::finite_difference_check;
pub use graph::{Graph, Primitive, Var};
pub use tensor::Tensor;
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

/// Runs one of the listed primitives on a fresh graph and returns its value.
pub fn forward_primitive(kind: Primitive, inputs: &[Tensor]) -> Result<Tensor> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = g.apply(kind, &vars)?;
    Ok(g.value(out).clone())
}
