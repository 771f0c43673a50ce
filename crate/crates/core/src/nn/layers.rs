use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// `x·W + b` for `x: [B, d_in]`, `W: [d_in, d_out]`, `b: [d_out]`.
pub fn dense(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = g.matmul(x, w)?;
    g.add_bias(xw, b)
}

/// Adds a per-channel bias `b: [C]` to `x: [B, C, n]`.
fn channel_bias(g: &mut Graph, x: Var, b: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let c = shape[1];
    if g.shape(b) != [c] {
        return Err(Error::dim(format!(
            "bias {:?} does not match {c} channels",
            g.shape(b)
        )));
    }
    let b = g.reshape(b, &[1, c, 1])?;
    let b = g.expand(b, &shape)?;
    g.add(x, b)
}

/// Edge-to-edge cross-shaped convolution.
///
/// `out[o,i,j] = Σ_c (Σ_k row_w[o,c,k]·x[c,i,k] + Σ_k col_w[o,c,k]·x[c,k,j]) + b[o]`
/// with `x: [B, C_in, n, n]`, `row_w, col_w: [C_out, C_in, n]`, `b: [C_out]`.
pub fn e2e_conv(g: &mut Graph, x: Var, row_w: Var, col_w: Var, b: Var) -> Result<Var> {
    let rows = g.cross_contract(x, row_w, false)?;
    let cols = g.cross_contract(x, col_w, true)?;
    let [batch, c, _] = *g.shape(rows) else {
        unreachable!("cross_contract returns rank 3")
    };
    if g.shape(b) != [c] {
        return Err(Error::dim(format!(
            "bias {:?} does not match {c} channels",
            g.shape(b)
        )));
    }
    let bias = g.reshape(b, &[1, c])?;
    let bias = g.expand(bias, &[batch, c])?;
    g.outer_sum(rows, cols, bias)
}

/// Edge-to-node convolution: `out[o,i] = Σ_c Σ_k w[o,c,k]·x[c,i,k] + b[o]`,
/// giving `[B, C_out, n]`.
pub fn e2n_conv(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let rows = g.cross_contract(x, w, false)?;
    channel_bias(g, rows, b)
}
