//! Alternating WGAN-GP training with an auxiliary classifier, and sampling.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::connmat::{ClassLabel, ConnectivityMatrix, LabeledDataset, Provenance, Sample};
use crate::error::{Error, Result};
use crate::nn::{adam_step, init_params, AdamState, ModelParams};
use crate::rng::{derive_seed, rng, Rng};

use super::loss::{classifier_nll, critic_loss};
use super::model::{generator_forward, one_hot, BackboneArch, GeneratorArch, LatentSample};

pub const GENERATOR_FILE: &str = "generator.bngc";
pub const CRITIC_FILE: &str = "critic.bngc";
pub const CLASSIFIER_FILE: &str = "classifier.bngc";

/// Batch size used when sampling from a trained generator.
const SAMPLE_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub z_dim: usize,
    pub n: usize,
    pub lr: f64,
    pub lambda_gp: f64,
    pub n_critic: usize,
    pub batch: usize,
    /// Generator iterations.
    pub steps: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            z_dim: 64,
            n: 90,
            lr: 0.0005,
            lambda_gp: 10.0,
            n_critic: 5,
            batch: 32,
            steps: 2000,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("gan: {m}")));
        if self.z_dim < 1 {
            return bad("z_dim must be at least 1");
        }
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.lambda_gp.is_finite() && self.lambda_gp >= 0.0) {
            return bad("lambda_gp must be non-negative");
        }
        if self.n_critic < 1 {
            return bad("n_critic must be at least 1");
        }
        if self.batch < 1 {
            return bad("batch must be at least 1");
        }
        Ok(())
    }

    pub fn generator_arch(&self) -> GeneratorArch {
        GeneratorArch::new(self.z_dim, self.n)
    }

    pub fn critic_arch(&self) -> BackboneArch {
        BackboneArch::critic(self.n)
    }

    pub fn classifier_arch(&self) -> BackboneArch {
        BackboneArch::classifier(self.n)
    }
}

/// Losses recorded after one generator iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    /// Critic objective of the last critic update.
    pub d_loss: f64,
    /// Gradient-penalty part of `d_loss`.
    pub gp: f64,
    pub g_loss: f64,
    pub c_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub entries: Vec<HistoryEntry>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,d_loss,gp,g_loss,c_loss\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?}",
                e.step, e.d_loss, e.gp, e.g_loss, e.c_loss
            );
        }
        s
    }
}

/// Parameters of the three networks after training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedGan {
    pub generator: ModelParams,
    pub critic: ModelParams,
    pub classifier: ModelParams,
    pub history: TrainingHistory,
}

impl TrainedGan {
    /// Writes the three checkpoints into `dir` (created if missing).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.generator.save(&dir.join(GENERATOR_FILE))?;
        self.critic.save(&dir.join(CRITIC_FILE))?;
        self.classifier.save(&dir.join(CLASSIFIER_FILE))
    }
}

/// Step-wise trainer; [`train`] runs it to completion.
pub struct GanTrainer {
    cfg: GanConfig,
    real: Vec<(ConnectivityMatrix, ClassLabel)>,
    g_arch: GeneratorArch,
    d_arch: BackboneArch,
    c_arch: BackboneArch,
    generator: ModelParams,
    critic: ModelParams,
    classifier: ModelParams,
    g_opt: AdamState,
    d_opt: AdamState,
    c_opt: AdamState,
    rng: Rng,
    history: TrainingHistory,
}

fn check_finite(step: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Diverged {
            step,
            what: what.into(),
        })
    }
}

fn normal_vec(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

impl GanTrainer {
    pub fn new(real: &LabeledDataset, cfg: &GanConfig) -> Result<Self> {
        cfg.validate()?;
        if real.is_empty() {
            return Err(Error::EmptyDataset("GAN training set".into()));
        }
        real.require_both_classes()?;
        if real.n() != cfg.n {
            return Err(Error::Config(format!(
                "gan: n={} but dataset has n={}",
                cfg.n,
                real.n()
            )));
        }
        let g_arch = cfg.generator_arch();
        let d_arch = cfg.critic_arch();
        let c_arch = cfg.classifier_arch();
        let generator = init_params(&g_arch.param_specs(), derive_seed(cfg.seed, &[0]))?;
        let critic = init_params(&d_arch.param_specs(), derive_seed(cfg.seed, &[1]))?;
        let classifier = init_params(&c_arch.param_specs(), derive_seed(cfg.seed, &[2]))?;
        Ok(GanTrainer {
            g_opt: AdamState::new(&generator, cfg.lr),
            d_opt: AdamState::new(&critic, cfg.lr),
            c_opt: AdamState::new(&classifier, cfg.lr),
            real: real.iter().map(|s| (s.matrix.clone(), s.label)).collect(),
            rng: rng(derive_seed(cfg.seed, &[3])),
            cfg: cfg.clone(),
            g_arch,
            d_arch,
            c_arch,
            generator,
            critic,
            classifier,
            history: TrainingHistory::default(),
        })
    }

    pub fn history(&self) -> &TrainingHistory {
        &self.history
    }

    pub fn generator(&self) -> &ModelParams {
        &self.generator
    }

    /// Draws a real minibatch (without replacement) as `[B,1,n,n]` plus labels.
    fn real_batch(&mut self) -> Result<(Tensor, Vec<ClassLabel>)> {
        let b = self.cfg.batch.min(self.real.len());
        let idx = index::sample(&mut self.rng, self.real.len(), b).into_vec();
        let n = self.cfg.n;
        let mut d = Vec::with_capacity(b * n * n);
        let labels = idx
            .iter()
            .map(|&i| {
                d.extend_from_slice(self.real[i].0.weights());
                self.real[i].1
            })
            .collect();
        Ok((Tensor::new(&[b, 1, n, n], d)?, labels))
    }

    fn latent(&mut self, b: usize) -> Result<Tensor> {
        let z = normal_vec(&mut self.rng, b * self.cfg.z_dim);
        Tensor::new(&[b, self.cfg.z_dim], z)
    }

    /// Generator output values for the given conditioning labels.
    fn fake_batch(&mut self, labels: &[ClassLabel]) -> Result<Tensor> {
        let z = self.latent(labels.len())?;
        let mut g = Graph::new();
        let p = self.generator.bind(&mut g)?;
        let z = g.leaf(z)?;
        let c = g.leaf(one_hot(labels))?;
        let x = self.g_arch.forward(&mut g, &p, z, c)?;
        Ok(g.value(x).clone())
    }

    fn critic_step(&mut self, step: usize) -> Result<(f64, f64)> {
        let (real, labels) = self.real_batch()?;
        let fake = self.fake_batch(&labels)?;
        let eps: Vec<f64> = (0..labels.len())
            .map(|_| self.rng.random::<f64>())
            .collect();
        let mut g = Graph::new();
        let p = self.critic.bind(&mut g)?;
        let real = g.leaf(real)?;
        let fake = g.leaf(fake)?;
        let arch = &self.d_arch;
        let loss = critic_loss(
            &mut g,
            |g, x| arch.forward(g, &p, x),
            real,
            fake,
            &eps,
            self.cfg.lambda_gp,
        )?;
        let total = check_finite(step, "critic loss", g.value(loss.total).item())?;
        let gp = check_finite(step, "gradient penalty", g.value(loss.penalty).item())?;
        let grads = g.grad(loss.total, &p.vars(), false)?;
        let grads = self.critic.gradients_from(&g, &grads)?;
        adam_step(&mut self.critic, &grads, &mut self.d_opt)?;
        Ok((total, gp))
    }

    fn classifier_step(&mut self, step: usize) -> Result<f64> {
        let (real, labels) = self.real_batch()?;
        let fake = self.fake_batch(&labels)?;
        let mut g = Graph::new();
        let p = self.classifier.bind(&mut g)?;
        let real = g.leaf(real)?;
        let fake = g.leaf(fake)?;
        let lr = self.c_arch.forward(&mut g, &p, real)?;
        let lf = self.c_arch.forward(&mut g, &p, fake)?;
        let nr = classifier_nll(&mut g, lr, &labels)?;
        let nf = classifier_nll(&mut g, lf, &labels)?;
        let loss = g.add(nr, nf)?;
        let v = check_finite(step, "classifier loss", g.value(loss).item())?;
        let grads = g.grad(loss, &p.vars(), false)?;
        let grads = self.classifier.gradients_from(&g, &grads)?;
        adam_step(&mut self.classifier, &grads, &mut self.c_opt)?;
        Ok(v)
    }

    fn generator_step(&mut self, step: usize) -> Result<f64> {
        let b = self.cfg.batch.min(self.real.len());
        let labels: Vec<ClassLabel> = (0..b)
            .map(|_| self.real[self.rng.random_range(0..self.real.len())].1)
            .collect();
        let z = self.latent(b)?;
        let mut g = Graph::new();
        let gp = self.generator.bind(&mut g)?;
        let dp = self.critic.bind(&mut g)?;
        let cp = self.classifier.bind(&mut g)?;
        let z = g.leaf(z)?;
        let c = g.leaf(one_hot(&labels))?;
        let fake = self.g_arch.forward(&mut g, &gp, z, c)?;
        let d = self.d_arch.forward(&mut g, &dp, fake)?;
        let md = g.mean(d);
        let adv = g.neg(md);
        let logits = self.c_arch.forward(&mut g, &cp, fake)?;
        let nll = classifier_nll(&mut g, logits, &labels)?;
        let loss = g.add(adv, nll)?;
        let v = check_finite(step, "generator loss", g.value(loss).item())?;
        let grads = g.grad(loss, &gp.vars(), false)?;
        let grads = self.generator.gradients_from(&g, &grads)?;
        adam_step(&mut self.generator, &grads, &mut self.g_opt)?;
        Ok(v)
    }

    /// One generator iteration: `n_critic` critic updates, one classifier
    /// update, one generator update.
    pub fn step(&mut self) -> Result<HistoryEntry> {
        let step = self.history.len();
        let mut last = (0.0, 0.0);
        for _ in 0..self.cfg.n_critic {
            last = self.critic_step(step)?;
        }
        let c_loss = self.classifier_step(step)?;
        let g_loss = self.generator_step(step)?;
        let e = HistoryEntry {
            step,
            d_loss: last.0,
            gp: last.1,
            g_loss,
            c_loss,
        };
        self.history.entries.push(e);
        Ok(e)
    }

    pub fn finish(self) -> TrainedGan {
        TrainedGan {
            generator: self.generator,
            critic: self.critic,
            classifier: self.classifier,
            history: self.history,
        }
    }
}

/// Trains for `cfg.steps` generator iterations.
pub fn train(real: &LabeledDataset, cfg: &GanConfig) -> Result<TrainedGan> {
    let mut t = GanTrainer::new(real, cfg)?;
    for _ in 0..cfg.steps {
        t.step()?;
    }
    Ok(t.finish())
}

/// Draws `count` matrices of class `label` from a generator.
pub fn sample(
    generator: &ModelParams,
    label: ClassLabel,
    count: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let arch = GeneratorArch::from_params(generator)?;
    let mut r = rng(seed);
    let mut out = LabeledDataset::new(arch.n);
    let mut left = count;
    while left > 0 {
        let b = left.min(SAMPLE_CHUNK);
        let latents: Vec<LatentSample> = (0..b)
            .map(|_| LatentSample {
                z: normal_vec(&mut r, arch.z_dim),
                label,
            })
            .collect();
        for matrix in generator_forward(generator, &latents)? {
            out.push(Sample {
                matrix,
                label,
                provenance: Provenance::Gan,
            })?;
        }
        left -= b;
    }
    Ok(out)
}

/// Loads a generator checkpoint and samples from it.
pub fn sample_checkpoint(
    path: &Path,
    label: ClassLabel,
    count: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    sample(&ModelParams::load(path)?, label, count, seed)
}

/// Synthetic counterpart of `like`: per class, as many generated matrices as
/// `like` holds real ones.
pub fn sample_like(
    generator: &ModelParams,
    like: &LabeledDataset,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut out = LabeledDataset::new(like.n());
    for c in ClassLabel::ALL {
        out.extend(&sample(
            generator,
            c,
            like.count(c),
            derive_seed(seed, &[c.index() as u64]),
        )?)?;
    }
    Ok(out)
}
