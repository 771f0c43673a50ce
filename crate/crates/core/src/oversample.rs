//! SMOTE and ADASYN oversampling on strict-upper-triangle vectors.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::connmat::{ClassLabel, ConnectivityMatrix, LabeledDataset, Provenance, Sample};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::sub_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OversampleConfig {
    /// Neighbor count.
    pub k: usize,
    /// Synthetic samples per class.
    pub per_class_target: usize,
    pub seed: u64,
}

impl Default for OversampleConfig {
    fn default() -> Self {
        OversampleConfig {
            k: 5,
            per_class_target: 100,
            seed: 0,
        }
    }
}

impl OversampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("oversample: k must be at least 1".into()));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` points nearest to `points[query]` (Euclidean), nearest
/// first, excluding the query. Only indices with `mask[i] == true` are
/// eligible when a mask is given. Ties go to the lower index.
pub fn knn_indices<P: AsRef<[f64]>>(
    points: &[P],
    query: usize,
    k: usize,
    mask: Option<&[bool]>,
) -> Result<Vec<usize>> {
    if query >= points.len() {
        return Err(Error::dim(format!(
            "query {query} out of {} points",
            points.len()
        )));
    }
    if let Some(m) = mask {
        if m.len() != points.len() {
            return Err(Error::dim("knn mask length differs from point count"));
        }
    }
    let q = points[query].as_ref();
    let mut cand: Vec<(f64, usize)> = (0..points.len())
        .filter(|&i| i != query && mask.is_none_or(|m| m[i]))
        .map(|i| (sq_dist(q, points[i].as_ref()), i))
        .collect();
    if k > cand.len() {
        return Err(Error::Config(format!(
            "k={k} but only {} eligible neighbors",
            cand.len()
        )));
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(cand[..k].iter().map(|c| c.1).collect())
}

fn interpolate(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)).collect()
}

fn to_sample(n: usize, v: &[f64], label: ClassLabel, provenance: Provenance) -> Result<Sample> {
    Ok(Sample {
        matrix: ConnectivityMatrix::from_upper_triangle(v, n)?,
        label,
        provenance,
    })
}

struct ClassView {
    vectors: Vec<Vec<f64>>,
    /// Same-class k nearest neighbors of each member.
    neighbors: Vec<Vec<usize>>,
}

fn class_view(d: &LabeledDataset, label: ClassLabel, k: usize) -> Result<ClassView> {
    let vectors: Vec<Vec<f64>> = d
        .of_class(label)
        .matrices()
        .map(|m| m.to_upper_triangle())
        .collect();
    if vectors.len() <= k {
        return Err(Error::Config(format!(
            "class {} has {} samples; k={k} needs more than k",
            label.short_name(),
            vectors.len()
        )));
    }
    let neighbors = par::map_indexed(vectors.len(), |i| knn_indices(&vectors, i, k, None))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(ClassView { vectors, neighbors })
}

/// `count` SMOTE samples of class `label`.
pub fn smote_class(
    d: &LabeledDataset,
    cfg: &OversampleConfig,
    label: ClassLabel,
    count: usize,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    let view = class_view(d, label, cfg.k)?;
    let m = view.vectors.len();
    let samples = par::map_indexed(count, |j| {
        let mut rng = sub_rng(cfg.seed, &[label.index() as u64, j as u64]);
        let i = rng.random_range(0..m);
        let nn = view.neighbors[i][rng.random_range(0..cfg.k)];
        let lambda: f64 = rng.random();
        let v = interpolate(&view.vectors[i], &view.vectors[nn], lambda);
        to_sample(d.n(), &v, label, Provenance::Smote)
    });
    LabeledDataset::from_samples(d.n(), samples.into_iter().collect::<Result<_>>()?)
}

/// `per_class_target` SMOTE samples for each class.
pub fn smote(d: &LabeledDataset, cfg: &OversampleConfig) -> Result<LabeledDataset> {
    let mut out = LabeledDataset::new(d.n());
    for label in ClassLabel::ALL {
        out.extend(&smote_class(d, cfg, label, cfg.per_class_target)?)?;
    }
    Ok(out)
}

/// ADASYN allocation: `g_i = round(total_g · r_i / Σ r)` with `r_i = Δ_i / k`;
/// an even split (remainder to the first samples) when every `Δ_i` is 0.
pub fn adasyn_allocation(deltas: &[usize], k: usize, total_g: usize) -> Vec<usize> {
    let m = deltas.len();
    if m == 0 {
        return Vec::new();
    }
    let r: Vec<f64> = deltas.iter().map(|&d| d as f64 / k as f64).collect();
    let sum: f64 = r.iter().sum();
    if sum == 0.0 {
        return (0..m)
            .map(|i| total_g / m + usize::from(i < total_g % m))
            .collect();
    }
    r.iter()
        .map(|ri| (ri / sum * total_g as f64).round() as usize)
        .collect()
}

/// ADASYN with `minority` as the class to oversample, generating about
/// `total_g` samples (rounding can shift the total by up to the class size).
pub fn adasyn(
    d: &LabeledDataset,
    cfg: &OversampleConfig,
    minority: ClassLabel,
    total_g: usize,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    let all: Vec<Vec<f64>> = d.matrices().map(|m| m.to_upper_triangle()).collect();
    let members: Vec<usize> = (0..d.len())
        .filter(|&i| d.samples()[i].label == minority)
        .collect();
    if members.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no samples of class {}",
            minority.short_name()
        )));
    }
    let deltas = par::map_indexed(members.len(), |q| {
        knn_indices(&all, members[q], cfg.k, None).map(|nn| {
            nn.iter()
                .filter(|&&j| d.samples()[j].label != minority)
                .count()
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let alloc = adasyn_allocation(&deltas, cfg.k, total_g);
    let view = class_view(d, minority, cfg.k)?;
    let jobs: Vec<(usize, usize)> = alloc
        .iter()
        .enumerate()
        .flat_map(|(i, &g)| (0..g).map(move |j| (i, j)))
        .collect();
    let samples = par::map_slice(&jobs, |&(i, j)| {
        let mut rng = sub_rng(cfg.seed, &[minority.index() as u64, i as u64, j as u64]);
        let nn = view.neighbors[i][rng.random_range(0..cfg.k)];
        let lambda: f64 = rng.random();
        let v = interpolate(&view.vectors[i], &view.vectors[nn], lambda);
        to_sample(d.n(), &v, minority, Provenance::Adasyn)
    });
    LabeledDataset::from_samples(d.n(), samples.into_iter().collect::<Result<_>>()?)
}

/// ADASYN run once with each class as the minority, `per_class_target` each.
pub fn adasyn_both(d: &LabeledDataset, cfg: &OversampleConfig) -> Result<LabeledDataset> {
    let mut out = LabeledDataset::new(d.n());
    for c in ClassLabel::ALL {
        out.extend(&adasyn(d, cfg, c, cfg.per_class_target)?)?;
    }
    Ok(out)
}
