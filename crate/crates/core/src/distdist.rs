//! Distances between real and synthetic feature distributions: pooled
//! histogram KL divergence and RBF-kernel maximum mean discrepancy.

use std::fmt::Write as _;

use crate::connmat::{ClassLabel, LabeledDataset};
use crate::error::{Error, Result};
use crate::graphmetrics::{dataset_features, GraphFeatures};
use crate::par;

pub const DEFAULT_BINS: usize = 32;
/// Mass added to every histogram bin before normalizing.
pub const KL_SMOOTHING: f64 = 1e-10;

/// One feature vector per subject.
pub type FeatureSample = Vec<Vec<f64>>;

fn check_sample(s: &[Vec<f64>], what: &str) -> Result<usize> {
    let Some(first) = s.first() else {
        return Err(Error::EmptyDataset(format!("{what}: empty sample")));
    };
    let dim = first.len();
    for r in s {
        if r.len() != dim {
            return Err(Error::dim(format!(
                "{what}: rows of length {dim} and {}",
                r.len()
            )));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{what} input")));
        }
    }
    Ok(dim)
}

/// `KL(P ‖ Q)` between histograms of all scalar entries pooled per sample.
///
/// Both histograms share `bins` equal-width bins spanning the joint range.
/// Each bin probability receives `KL_SMOOTHING` before renormalizing.
/// Returns 0 when every value in both samples is identical.
pub fn histogram_kl(p: &[Vec<f64>], q: &[Vec<f64>], bins: usize) -> Result<f64> {
    check_sample(p, "histogram_kl")?;
    check_sample(q, "histogram_kl")?;
    if bins == 0 {
        return Err(Error::Config("histogram_kl: bins must be positive".into()));
    }
    let all = p.iter().chain(q).flatten().copied();
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
        (a.min(x), b.max(x))
    });
    if hi <= lo {
        return Ok(0.0);
    }
    let hist = |s: &[Vec<f64>]| {
        let mut h = vec![0.0; bins];
        let mut total = 0.0;
        for &x in s.iter().flatten() {
            let b = (((x - lo) / (hi - lo)) * bins as f64) as usize;
            h[b.min(bins - 1)] += 1.0;
            total += 1.0;
        }
        let z = 1.0 + bins as f64 * KL_SMOOTHING;
        h.iter_mut()
            .for_each(|c| *c = (*c / total + KL_SMOOTHING) / z);
        h
    };
    let (hp, hq) = (hist(p), hist(q));
    Ok(hp.iter().zip(&hq).map(|(a, b)| a * (a / b).ln()).sum())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, &mut hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if v.len() % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo + hi) / 2.0
    }
}

/// Biased (V-statistic) squared MMD with a Gaussian kernel whose bandwidth is
/// the median pairwise distance over `x ∪ y` (1 if that median is 0).
pub fn mmd_rbf(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    let dx = check_sample(x, "mmd_rbf")?;
    let dy = check_sample(y, "mmd_rbf")?;
    if dx != dy {
        return Err(Error::dim(format!("mmd_rbf: dimensions {dx} and {dy}")));
    }
    let pts: Vec<&[f64]> = x.iter().chain(y).map(Vec::as_slice).collect();
    let m = pts.len();
    let d2: Vec<Vec<f64>> =
        par::map_indexed(m, |i| (0..m).map(|j| sq_dist(pts[i], pts[j])).collect());
    let dists: Vec<f64> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| d2[i][j].sqrt())
        .collect();
    let sigma = match median(dists) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let nx = x.len();
    let block_mean = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        let count = (rows.len() * cols.len()) as f64;
        let sums = par::map_indexed(rows.len(), |r| {
            cols.clone()
                .map(|c| (-gamma * d2[rows.start + r][c]).exp())
                .sum::<f64>()
        });
        sums.iter().sum::<f64>() / count
    };
    let kxx = block_mean(0..nx, 0..nx);
    let kyy = block_mean(nx..m, nx..m);
    let kxy = block_mean(0..nx, nx..m);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

/// Topological features compared between real and synthetic cohorts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    EdgeWeight,
    NodeStrength,
    LocalEfficiency,
    GlobalEfficiency,
}

impl Feature {
    pub const ALL: [Feature; 4] = [
        Feature::EdgeWeight,
        Feature::NodeStrength,
        Feature::LocalEfficiency,
        Feature::GlobalEfficiency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::EdgeWeight => "edge_weight",
            Feature::NodeStrength => "node_strength",
            Feature::LocalEfficiency => "local_efficiency",
            Feature::GlobalEfficiency => "global_efficiency",
        }
    }

    pub fn extract(self, f: &GraphFeatures) -> Vec<f64> {
        match self {
            Feature::EdgeWeight => f.edge_weights.clone(),
            Feature::NodeStrength => f.strength.clone(),
            Feature::LocalEfficiency => f.local_efficiency.clone(),
            Feature::GlobalEfficiency => vec![f.global_efficiency],
        }
    }
}

/// Per-class feature samples of a dataset.
pub fn class_feature_samples(
    d: &LabeledDataset,
    label: ClassLabel,
    feature: Feature,
) -> Result<FeatureSample> {
    let sub = d.of_class(label);
    Ok(dataset_features(&sub)?
        .iter()
        .map(|f| feature.extract(f))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityEntry {
    pub class: ClassLabel,
    pub feature: Feature,
    pub kl: f64,
    pub mmd: f64,
}

/// KL and MMD for each class and feature.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityReport {
    pub bins: usize,
    pub entries: Vec<SimilarityEntry>,
}

impl SimilarityReport {
    pub fn get(&self, class: ClassLabel, feature: Feature) -> Option<&SimilarityEntry> {
        self.entries
            .iter()
            .find(|e| e.class == class && e.feature == feature)
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| [e.kl, e.mmd]).collect()
    }

    pub const CSV_HEADER: &'static str = "method,class,feature,kl,mmd,bins";

    /// CSV rows (no header) tagged with `method`.
    pub fn csv_rows(&self, method: &str) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{method},{},{},{:?},{:?},{}",
                e.class.short_name(),
                e.feature.as_str(),
                e.kl,
                e.mmd,
                self.bins
            );
        }
        s
    }

    pub fn to_csv(&self, method: &str) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows(method))
    }
}

/// Compares `fake` to `real` class by class on every feature.
pub fn similarity_report(
    real: &LabeledDataset,
    fake: &LabeledDataset,
    bins: usize,
) -> Result<SimilarityReport> {
    real.require_both_classes()?;
    fake.require_both_classes()?;
    if real.n() != fake.n() {
        return Err(Error::dim(format!(
            "real n={} vs fake n={}",
            real.n(),
            fake.n()
        )));
    }
    let rf = dataset_features(real)?;
    let ff = dataset_features(fake)?;
    let mut entries = Vec::with_capacity(8);
    for class in ClassLabel::ALL {
        let pick = |d: &LabeledDataset, fs: &[GraphFeatures], feature: Feature| -> FeatureSample {
            d.iter()
                .zip(fs)
                .filter(|(s, _)| s.label == class)
                .map(|(_, f)| feature.extract(f))
                .collect()
        };
        for feature in Feature::ALL {
            let p = pick(real, &rf, feature);
            let q = pick(fake, &ff, feature);
            entries.push(SimilarityEntry {
                class,
                feature,
                kl: histogram_kl(&p, &q, bins)?,
                mmd: mmd_rbf(&p, &q)?,
            });
        }
    }
    Ok(SimilarityReport { bins, entries })
}
