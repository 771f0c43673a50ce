//! Seeded two-class population of modular connectivity matrices.
//!
//! Every subject is drawn independently from its own ChaCha8 stream, seeded
//! with `rng::derive_seed(seed, &[class, index])`:
//!
//! 1. nodes are split into `modules` contiguous communities;
//! 2. each node pair gets an edge with probability `p_intra` (same module)
//!    or `p_inter` (different modules), weighted `LogNormal(weight_mu, weight_sigma)`;
//! 3. weights are divided by the matrix maximum;
//! 4. for class 1 every inter-module weight is multiplied by `attenuation`;
//! 5. existing edges receive `N(0, noise_sigma)` noise and are clamped to `[0, 1]`.

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::connmat::{
    triangle_len, ClassLabel, ConnectivityMatrix, LabeledDataset, Provenance, Sample,
};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::sub_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n: usize,
    pub modules: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub weight_mu: f64,
    pub weight_sigma: f64,
    pub attenuation: f64,
    pub noise_sigma: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n: 90,
            modules: 4,
            p_intra: 0.8,
            p_inter: 0.2,
            weight_mu: 0.0,
            weight_sigma: 0.5,
            attenuation: 0.6,
            noise_sigma: 0.02,
            per_class: 100,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("corpus: {m}")));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.modules < 1 || self.modules > self.n {
            return bad(format!(
                "modules must be in 1..={}, got {}",
                self.n, self.modules
            ));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !self.weight_mu.is_finite()
            || !(self.weight_sigma.is_finite() && self.weight_sigma >= 0.0)
        {
            return bad("weight_mu must be finite and weight_sigma non-negative".into());
        }
        if !(self.attenuation > 0.0 && self.attenuation <= 1.0) {
            return bad(format!(
                "attenuation must be in (0, 1], got {}",
                self.attenuation
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            ));
        }
        if self.per_class < 1 {
            return bad("per_class must be at least 1".into());
        }
        Ok(())
    }

    /// Community of node `i`.
    pub fn module_of(&self, i: usize) -> usize {
        i * self.modules / self.n
    }
}

/// One subject of class `label`, drawn from stream `(seed, class, index)`.
pub fn generate_subject(
    cfg: &CorpusConfig,
    label: ClassLabel,
    index: usize,
) -> Result<ConnectivityMatrix> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = sub_rng(cfg.seed, &[label.index() as u64, index as u64]);
    let lognormal = LogNormal::new(cfg.weight_mu, cfg.weight_sigma)
        .map_err(|e| Error::Config(format!("corpus: {e}")))?;
    let noise =
        Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(format!("corpus: {e}")))?;

    let mut v = Vec::with_capacity(triangle_len(n));
    let mut inter = Vec::with_capacity(triangle_len(n));
    for i in 0..n {
        for j in i + 1..n {
            let cross = cfg.module_of(i) != cfg.module_of(j);
            let p = if cross { cfg.p_inter } else { cfg.p_intra };
            let w = if rng.random::<f64>() < p {
                lognormal.sample(&mut rng)
            } else {
                0.0
            };
            v.push(w);
            inter.push(cross);
        }
    }
    let max = v.iter().copied().fold(0.0, f64::max);
    for (w, &cross) in v.iter_mut().zip(&inter) {
        if *w == 0.0 {
            continue;
        }
        *w /= max;
        if cross && label == ClassLabel::Disease {
            *w *= cfg.attenuation;
        }
        *w = (*w + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    ConnectivityMatrix::from_upper_triangle(&v, n)
}

/// `per_class` subjects of class 0 followed by `per_class` of class 1.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let total = 2 * cfg.per_class;
    let samples = par::map_indexed(total, |k| {
        let label = ClassLabel::ALL[k / cfg.per_class];
        generate_subject(cfg, label, k % cfg.per_class).map(|matrix| Sample {
            matrix,
            label,
            provenance: Provenance::Real,
        })
    });
    LabeledDataset::from_samples(cfg.n, samples.into_iter().collect::<Result<_>>()?)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance between the two class-mean upper-triangle vectors divided by the
/// mean distance of samples to their own class mean. Infinite when the
/// classes differ but have no spread; zero when nothing differs at all.
pub fn class_separation(d: &LabeledDataset) -> Result<f64> {
    d.require_both_classes()?;
    let len = triangle_len(d.n());
    let vecs: Vec<(ClassLabel, Vec<f64>)> = d
        .iter()
        .map(|s| (s.label, s.matrix.to_upper_triangle()))
        .collect();
    let means: Vec<Vec<f64>> = ClassLabel::ALL
        .iter()
        .map(|&c| {
            let mut m = vec![0.0; len];
            let mut k = 0.0;
            for (_, v) in vecs.iter().filter(|(l, _)| *l == c) {
                m.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                k += 1.0;
            }
            m.iter_mut().for_each(|a| *a /= k);
            m
        })
        .collect();
    let between = euclid(&means[0], &means[1]);
    let within = vecs
        .iter()
        .map(|(l, v)| euclid(v, &means[l.index()]))
        .sum::<f64>()
        / vecs.len() as f64;
    Ok(if within > 0.0 {
        between / within
    } else if between > 0.0 {
        f64::INFINITY
    } else {
        0.0
    })
}

/// Mean weight of inter-module edges (`inter = true`) or intra-module node
/// pairs over the matrices of `d` with the given label.
pub fn mean_module_weight(
    cfg: &CorpusConfig,
    d: &LabeledDataset,
    label: ClassLabel,
    inter: bool,
) -> f64 {
    let n = d.n();
    let (mut s, mut k) = (0.0, 0usize);
    for m in d.of_class(label).matrices() {
        for i in 0..n {
            for j in i + 1..n {
                if (cfg.module_of(i) != cfg.module_of(j)) == inter {
                    s += m.get(i, j);
                    k += 1;
                }
            }
        }
    }
    if k == 0 {
        0.0
    } else {
        s / k as f64
    }
}
