use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Central finite differences `(f(x+h·e_i) − f(x−h·e_i)) / 2h` for every coordinate.
pub fn finite_diff_gradient<F>(f: F, at: &Tensor, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    let mut x = at.clone();
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = f(&x)?;
        x.data_mut()[i] = orig - h;
        let down = f(&x)?;
        x.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Largest coordinate-wise gap between two gradients, relative to the larger
/// of their max-norms (floored at 1e-8 so all-zero gradients compare absolutely).
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Compares the autodiff gradient of a scalar function against central
/// finite differences and returns the maximum relative error.
///
/// `f` builds the function on a fresh graph from the input leaf.
pub fn finite_diff_check<F>(f: F, at: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.leaf(at.clone())?;
    let y = f(&mut g, x)?;
    let grad = g.grad(y, &[x], false)?;
    let analytic = g.value(grad[0]).data().to_vec();
    let eval = |t: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.leaf(t.clone())?;
        let y = f(&mut g, x)?;
        Ok(g.value(y).item())
    };
    let numeric = finite_diff_gradient(eval, at, h)?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Multi-input version of [`finite_diff_check`]: `f` receives one leaf per
/// input and the worst relative error over all inputs is returned.
pub fn finite_diff_check_all<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let leaves = inputs
        .iter()
        .map(|t| g.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let y = f(&mut g, &leaves)?;
    let grads = g.grad(y, &leaves, false)?;
    let mut worst = 0.0f64;
    for (i, at) in inputs.iter().enumerate() {
        let analytic = g.value(grads[i]).data().to_vec();
        let eval = |t: &Tensor| -> Result<f64> {
            let mut g = Graph::new();
            let mut vars = Vec::with_capacity(inputs.len());
            for (j, other) in inputs.iter().enumerate() {
                vars.push(g.leaf(if i == j { t.clone() } else { other.clone() })?);
            }
            let y = f(&mut g, &vars)?;
            Ok(g.value(y).item())
        };
        let numeric = finite_diff_gradient(eval, at, h)?;
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    Ok(worst)
}
