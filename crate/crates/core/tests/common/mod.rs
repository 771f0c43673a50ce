#![allow(dead_code)]

use conngan::autodiff::{finite_diff_gradient, max_relative_error, Graph, Tensor};
use conngan::connmat::LabeledDataset;
use conngan::gan::{gradient_penalty, stack_matrices, BackboneArch};
use conngan::nn::{init_params, ModelParams};
use conngan::synthcorpus::{generate_corpus, CorpusConfig};
use rand::Rng as _;

pub fn tiny_corpus(n: usize, per_class: usize, seed: u64) -> LabeledDataset {
    generate_corpus(&CorpusConfig {
        n,
        modules: 2.min(n),
        per_class,
        seed,
        ..CorpusConfig::default()
    })
    .unwrap()
}

fn penalty_value(
    arch: &BackboneArch,
    params: &ModelParams,
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
    lambda: f64,
) -> f64 {
    let mut g = Graph::new();
    let p = params.bind(&mut g).unwrap();
    let r = g.leaf(real.clone()).unwrap();
    let f = g.leaf(fake.clone()).unwrap();
    let gp = gradient_penalty(&mut g, |g, x| arch.forward(g, &p, x), r, f, eps, lambda).unwrap();
    g.value(gp).item()
}

/// Worst relative error, over all critic parameter tensors, between the
/// double-backprop gradient of the penalty and central finite differences.
pub fn penalty_gradient_error(n: usize, factor: usize, seed: u64) -> f64 {
    let arch = BackboneArch::critic(n).downsized(n, factor);
    let mut params = init_params(&arch.param_specs(), seed).unwrap();
    // Nonzero biases keep every relu away from the kink at an all-zero input.
    let mut rng = conngan::rng::rng(seed);
    for (name, t) in params.iter_mut() {
        if name.ends_with(".b") {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let d = tiny_corpus(n, 3, seed);
    let ms: Vec<_> = d.matrices().collect();
    let real = stack_matrices(&ms[..3]).unwrap();
    let fake = stack_matrices(&ms[3..]).unwrap();
    let eps = [0.2, 0.55, 0.9];
    let lambda = 10.0;

    let mut g = Graph::new();
    let p = params.bind(&mut g).unwrap();
    let r = g.leaf(real.clone()).unwrap();
    let f = g.leaf(fake.clone()).unwrap();
    let gp = gradient_penalty(&mut g, |g, x| arch.forward(g, &p, x), r, f, &eps, lambda).unwrap();
    let grads = g.grad(gp, &p.vars(), false).unwrap();
    let analytic = params.gradients_from(&g, &grads).unwrap();

    let mut worst: f64 = 0.0;
    for (name, t) in params.iter() {
        let numeric = finite_diff_gradient(
            |v| {
                let mut q = params.clone();
                *q.get_mut(name).unwrap() = v.clone();
                Ok(penalty_value(&arch, &q, &real, &fake, &eps, lambda))
            },
            t,
            1e-5,
        )
        .unwrap();
        let a = analytic.get(name).unwrap().data();
        let e = max_relative_error(a, &numeric);
        worst = worst.max(e);
    }
    worst
}
