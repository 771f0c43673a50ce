//! Generator, critic and auxiliary-classifier architectures.

use crate::autodiff::{Graph, Tensor, Var};
use crate::connmat::{triangle_len, ClassLabel, ConnectivityMatrix};
use crate::error::{Error, Result};
use crate::nn::{dense, e2e_conv, e2n_conv, BoundParams, ModelParams, ParamSpec};

pub const NUM_CLASSES: usize = 2;

/// Conditional MLP generator: `concat(z, one_hot(c))` through relu hidden
/// layers to a sigmoid upper-triangle vector, mirrored into an `n×n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorArch {
    pub z_dim: usize,
    pub n: usize,
    pub hidden: Vec<usize>,
}

pub const GENERATOR_HIDDEN: [usize; 4] = [128, 256, 512, 1024];

impl GeneratorArch {
    pub fn new(z_dim: usize, n: usize) -> Self {
        GeneratorArch {
            z_dim,
            n,
            hidden: GENERATOR_HIDDEN.to_vec(),
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.z_dim + NUM_CLASSES];
        w.extend(&self.hidden);
        w.push(triangle_len(self.n));
        w
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        dense_specs("fc", &self.widths())
    }

    /// Recovers the architecture from a parameter set (layer shapes).
    pub fn from_params(p: &ModelParams) -> Result<Self> {
        let mut widths = Vec::new();
        let mut k = 0;
        while let Some(w) = p.get(&format!("fc{k}.w")) {
            let [din, dout] = w.shape() else {
                return Err(Error::Checkpoint(format!("fc{k}.w is not a matrix")));
            };
            if k == 0 {
                widths.push(*din);
            }
            widths.push(*dout);
            k += 1;
        }
        if widths.len() < 2 || widths[0] <= NUM_CLASSES {
            return Err(Error::Checkpoint("not a generator checkpoint".into()));
        }
        let out = *widths.last().unwrap();
        let n = (1..=4096)
            .find(|&n| triangle_len(n) == out)
            .ok_or_else(|| {
                Error::Checkpoint(format!("output width {out} is not a triangle size"))
            })?;
        let arch = GeneratorArch {
            z_dim: widths[0] - NUM_CLASSES,
            n,
            hidden: widths[1..widths.len() - 1].to_vec(),
        };
        if arch.param_specs().len() != p.len() {
            return Err(Error::Checkpoint(
                "unexpected tensors in generator checkpoint".into(),
            ));
        }
        Ok(arch)
    }

    /// `z: [B, z_dim]`, `c: [B, 2]` → `[B, 1, n, n]`.
    pub fn forward(&self, g: &mut Graph, p: &BoundParams, z: Var, c: Var) -> Result<Var> {
        let b = g.shape(z)[0];
        let mut h = g.concat(&[z, c], 1)?;
        let layers = self.hidden.len() + 1;
        for k in 0..layers {
            h = dense(
                g,
                h,
                p.get(&format!("fc{k}.w"))?,
                p.get(&format!("fc{k}.b"))?,
            )?;
            h = if k + 1 < layers {
                g.relu(h)
            } else {
                g.sigmoid(h)
            };
        }
        let m = g.triu_to_sym(h, self.n)?;
        g.reshape(m, &[b, 1, self.n, self.n])
    }
}

fn dense_specs(prefix: &str, widths: &[usize]) -> Vec<ParamSpec> {
    widths
        .windows(2)
        .enumerate()
        .flat_map(|(k, w)| {
            [
                ParamSpec::he(format!("{prefix}{k}.w"), &[w[0], w[1]], w[0]),
                ParamSpec::zeros(format!("{prefix}{k}.b"), &[w[1]]),
            ]
        })
        .collect()
}

/// Shared critic/classifier backbone: E2E → relu → E2E → relu → E2N → relu
/// → flatten → fully connected stack (relu between, linear output).
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneArch {
    pub n: usize,
    pub e2e: [usize; 2],
    pub e2n: usize,
    pub fc: Vec<usize>,
    pub outputs: usize,
}

impl BackboneArch {
    pub fn critic(n: usize) -> Self {
        BackboneArch {
            n,
            e2e: [16, 16],
            e2n: 32,
            fc: vec![512, 256, 128, 64],
            outputs: 1,
        }
    }

    pub fn classifier(n: usize) -> Self {
        BackboneArch {
            outputs: NUM_CLASSES,
            ..Self::critic(n)
        }
    }

    /// Same topology with every hidden width divided by `factor` (at least 1).
    pub fn downsized(&self, n: usize, factor: usize) -> Self {
        let f = |w: usize| (w / factor).max(1);
        BackboneArch {
            n,
            e2e: [f(self.e2e[0]), f(self.e2e[1])],
            e2n: f(self.e2n),
            fc: self.fc.iter().map(|&w| f(w)).collect(),
            outputs: self.outputs,
        }
    }

    pub fn flat_width(&self) -> usize {
        self.e2n * self.n
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let n = self.n;
        let [c1, c2] = self.e2e;
        let mut s = vec![
            ParamSpec::he("e2e1.row", &[c1, 1, n], 2 * n),
            ParamSpec::he("e2e1.col", &[c1, 1, n], 2 * n),
            ParamSpec::zeros("e2e1.b", &[c1]),
            ParamSpec::he("e2e2.row", &[c2, c1, n], 2 * c1 * n),
            ParamSpec::he("e2e2.col", &[c2, c1, n], 2 * c1 * n),
            ParamSpec::zeros("e2e2.b", &[c2]),
            ParamSpec::he("e2n.w", &[self.e2n, c2, n], c2 * n),
            ParamSpec::zeros("e2n.b", &[self.e2n]),
        ];
        let mut widths = vec![self.flat_width()];
        widths.extend(&self.fc);
        widths.push(self.outputs);
        s.extend(dense_specs("fc", &widths));
        s
    }

    /// `x: [B, 1, n, n]` → `[B, outputs]` (unnormalized scores).
    pub fn forward(&self, g: &mut Graph, p: &BoundParams, x: Var) -> Result<Var> {
        let b = g.shape(x)[0];
        let h = e2e_conv(
            g,
            x,
            p.get("e2e1.row")?,
            p.get("e2e1.col")?,
            p.get("e2e1.b")?,
        )?;
        let h = g.relu(h);
        let h = e2e_conv(
            g,
            h,
            p.get("e2e2.row")?,
            p.get("e2e2.col")?,
            p.get("e2e2.b")?,
        )?;
        let h = g.relu(h);
        let h = e2n_conv(g, h, p.get("e2n.w")?, p.get("e2n.b")?)?;
        let h = g.relu(h);
        let mut h = g.reshape(h, &[b, self.flat_width()])?;
        let layers = self.fc.len() + 1;
        for k in 0..layers {
            h = dense(
                g,
                h,
                p.get(&format!("fc{k}.w"))?,
                p.get(&format!("fc{k}.b"))?,
            )?;
            if k + 1 < layers {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

pub fn one_hot(labels: &[ClassLabel]) -> Tensor {
    let mut d = vec![0.0; labels.len() * NUM_CLASSES];
    for (i, l) in labels.iter().enumerate() {
        d[i * NUM_CLASSES + l.index()] = 1.0;
    }
    Tensor::new(&[labels.len(), NUM_CLASSES], d).expect("one-hot shape")
}

/// Stacks matrices into a `[B, 1, n, n]` tensor.
pub fn stack_matrices(ms: &[&ConnectivityMatrix]) -> Result<Tensor> {
    let n = ms.first().map_or(0, |m| m.n());
    let mut d = Vec::with_capacity(ms.len() * n * n);
    for m in ms {
        if m.n() != n {
            return Err(Error::dim("matrices in a batch must share n"));
        }
        d.extend_from_slice(m.weights());
    }
    Tensor::new(&[ms.len(), 1, n, n], d)
}

/// Splits a `[B, 1, n, n]` tensor back into matrices (invariants checked).
pub fn unstack_matrices(t: &Tensor) -> Result<Vec<ConnectivityMatrix>> {
    let [_, 1, n, _] = *t.shape() else {
        return Err(Error::dim("expected a [B, 1, n, n] tensor"));
    };
    t.data()
        .chunks_exact(n * n)
        .map(|c| ConnectivityMatrix::new(n, c.to_vec()))
        .collect()
}

/// A latent draw: Gaussian noise plus the conditioning class.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    pub label: ClassLabel,
}

impl LatentSample {
    pub fn one_hot(&self) -> [f64; NUM_CLASSES] {
        let mut c = [0.0; NUM_CLASSES];
        c[self.label.index()] = 1.0;
        c
    }
}

/// Runs the generator on explicit latents.
pub fn generator_forward(
    params: &ModelParams,
    latents: &[LatentSample],
) -> Result<Vec<ConnectivityMatrix>> {
    let arch = GeneratorArch::from_params(params)?;
    if latents.is_empty() {
        return Ok(Vec::new());
    }
    let mut zd = Vec::with_capacity(latents.len() * arch.z_dim);
    for l in latents {
        if l.z.len() != arch.z_dim {
            return Err(Error::dim(format!(
                "latent has {} dims, generator expects {}",
                l.z.len(),
                arch.z_dim
            )));
        }
        zd.extend_from_slice(&l.z);
    }
    let labels: Vec<ClassLabel> = latents.iter().map(|l| l.label).collect();
    let mut g = Graph::new();
    let p = params.bind(&mut g)?;
    let z = g.leaf(Tensor::new(&[latents.len(), arch.z_dim], zd)?)?;
    let c = g.leaf(one_hot(&labels))?;
    let x = arch.forward(&mut g, &p, z, c)?;
    unstack_matrices(g.value(x))
}

fn backbone_scores(
    params: &ModelParams,
    arch: &BackboneArch,
    ms: &[&ConnectivityMatrix],
) -> Result<Tensor> {
    if ms.iter().any(|m| m.n() != arch.n) {
        return Err(Error::dim(format!("network expects n={}", arch.n)));
    }
    let mut g = Graph::new();
    let p = params.bind(&mut g)?;
    let x = g.leaf(stack_matrices(ms)?)?;
    let y = arch.forward(&mut g, &p, x)?;
    Ok(g.value(y).clone())
}

/// Critic scores, one per matrix.
pub fn critic_forward(
    params: &ModelParams,
    arch: &BackboneArch,
    ms: &[&ConnectivityMatrix],
) -> Result<Vec<f64>> {
    if ms.is_empty() {
        return Ok(Vec::new());
    }
    Ok(backbone_scores(params, arch, ms)?.into_data())
}

/// Softmax class probabilities `[p(CN), p(AD)]` per matrix.
pub fn classifier_forward(
    params: &ModelParams,
    arch: &BackboneArch,
    ms: &[&ConnectivityMatrix],
) -> Result<Vec<[f64; 2]>> {
    if ms.is_empty() {
        return Ok(Vec::new());
    }
    let logits = backbone_scores(params, arch, ms)?;
    Ok(logits
        .data()
        .chunks_exact(NUM_CLASSES)
        .map(|r| {
            let m = r[0].max(r[1]);
            let (a, b) = ((r[0] - m).exp(), (r[1] - m).exp());
            [a / (a + b), b / (a + b)]
        })
        .collect())
}
