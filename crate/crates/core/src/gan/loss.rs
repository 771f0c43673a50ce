//! Wasserstein critic objective with gradient penalty and the auxiliary
//! classifier likelihood.

use crate::autodiff::{row_norms, Graph, Tensor, Var};
use crate::connmat::ClassLabel;
use crate::error::{Error, Result};

use super::model::one_hot;

fn batch_of(g: &Graph, x: Var, what: &str) -> Result<usize> {
    match g.shape(x).first() {
        Some(&b) if b > 0 => Ok(b),
        _ => Err(Error::EmptyDataset(format!("{what}: empty batch"))),
    }
}

/// `λ · mean_b (‖∇ D(x̂_b)‖₂ − 1)²` with `x̂_b = ε_b·real_b + (1 − ε_b)·fake_b`.
///
/// `critic` maps a `[B, ..]` batch to per-sample scores. The input gradient
/// is taken with `create_graph`, so the result can be differentiated again
/// with respect to the critic parameters.
pub fn gradient_penalty<F>(
    g: &mut Graph,
    critic: F,
    real: Var,
    fake: Var,
    eps: &[f64],
    lambda: f64,
) -> Result<Var>
where
    F: FnOnce(&mut Graph, Var) -> Result<Var>,
{
    let shape = g.shape(real).to_vec();
    if g.shape(fake) != shape.as_slice() {
        return Err(Error::dim(format!(
            "gradient_penalty: real {shape:?} vs fake {:?}",
            g.shape(fake)
        )));
    }
    let b = batch_of(g, real, "gradient_penalty")?;
    if eps.len() != b {
        return Err(Error::dim(format!(
            "gradient_penalty: {} mixing weights for batch {b}",
            eps.len()
        )));
    }
    let mut eshape = vec![1; shape.len()];
    eshape[0] = b;
    let e = g.leaf(Tensor::new(&eshape, eps.to_vec())?)?;
    let e = g.expand(e, &shape)?;
    let diff = g.sub(real, fake)?;
    let step = g.mul(e, diff)?;
    let x_hat = g.add(fake, step)?;
    let scores = critic(g, x_hat)?;
    let total = g.sum(scores);
    let [grad] = g.grad(total, &[x_hat], true)?[..] else {
        unreachable!("one gradient per input")
    };
    let norms = row_norms(g, grad)?;
    let dev = g.add_scalar(norms, -1.0);
    let sq = g.square(dev);
    let m = g.mean(sq);
    Ok(g.scale(m, lambda))
}

/// Components of the critic objective.
#[derive(Clone, Copy, Debug)]
pub struct CriticLoss {
    /// `mean D(fake) − mean D(real) + penalty`, to be minimized.
    pub total: Var,
    pub wasserstein: Var,
    pub penalty: Var,
}

/// `mean D(fake) − mean D(real) + gradient_penalty(..)`.
pub fn critic_loss<F>(
    g: &mut Graph,
    mut critic: F,
    real: Var,
    fake: Var,
    eps: &[f64],
    lambda: f64,
) -> Result<CriticLoss>
where
    F: FnMut(&mut Graph, Var) -> Result<Var>,
{
    batch_of(g, real, "critic_loss")?;
    batch_of(g, fake, "critic_loss")?;
    let d_real = critic(g, real)?;
    let d_fake = critic(g, fake)?;
    let m_real = g.mean(d_real);
    let m_fake = g.mean(d_fake);
    let wasserstein = g.sub(m_fake, m_real)?;
    let penalty = gradient_penalty(g, &mut critic, real, fake, eps, lambda)?;
    let total = g.add(wasserstein, penalty)?;
    Ok(CriticLoss {
        total,
        wasserstein,
        penalty,
    })
}

/// Mean negative log-probability of the true class for `logits: [B, 2]`.
pub fn classifier_nll(g: &mut Graph, logits: Var, labels: &[ClassLabel]) -> Result<Var> {
    let b = batch_of(g, logits, "classifier_nll")?;
    if b != labels.len() {
        return Err(Error::dim(format!(
            "classifier_nll: {} labels for batch {b}",
            labels.len()
        )));
    }
    let lp = g.log_softmax(logits)?;
    let mask = g.leaf(one_hot(labels))?;
    let picked = g.mul(lp, mask)?;
    let s = g.sum(picked);
    Ok(g.scale(s, -1.0 / b as f64))
}
