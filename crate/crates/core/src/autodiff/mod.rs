//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations evaluate eagerly and are recorded on a [`Graph`]. Because the
//! backward pass is itself written with graph operations, gradients can be
//! differentiated again (double backprop).
//!
//! Shapes must match exactly for element-wise operations; the only implicit
//! broadcast is [`Graph::add_bias`]. Everything else goes through explicit
//! [`Graph::expand`] / [`Graph::reduce_to`].
//!
//! Non-finite values are rejected at leaf insertion and by the operations
//! that can create them from finite inputs (`log`, `div`, `exp`, `sqrt`).
//! The relu subgradient at zero is zero.

mod check;
mod graph;
pub(crate) mod kernels;
mod pool;
mod tensor;

pub use check::{
    finite_diff_check, finite_diff_check_all, finite_diff_gradient, max_relative_error,
};
pub use graph::{Graph, Var};
pub use tensor::Tensor;

/// Stabilizer added under the square root of Euclidean norms so their
/// gradient stays finite at zero.
pub const NORM_EPS: f64 = 1e-12;

/// Per-row Euclidean norm of `x: [B, ..]`, returned as `[B, 1]`:
/// `sqrt(Σ x² + NORM_EPS)`.
pub fn row_norms(g: &mut Graph, x: Var) -> crate::Result<Var> {
    let shape = g.shape(x).to_vec();
    let b = *shape.first().unwrap_or(&1);
    let rest: usize = shape.iter().skip(1).product();
    let flat = g.reshape(x, &[b, rest])?;
    let sq = g.square(flat);
    let ss = g.reduce_to(sq, &[b, 1])?;
    let ss = g.add_scalar(ss, NORM_EPS);
    g.sqrt(ss)
}
