//! Connectivity matrices, labels, datasets and their on-disk format.
//!
//! A dataset directory holds one CSV per matrix (`n` lines of `n`
//! comma-separated values, no header) and a `manifest.json`:
//!
//! ```json
//! {"n": 90, "samples": [{"file": "sample_00000.csv", "label": 0, "provenance": "real"}]}
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle reproduces every weight bit for bit.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Node count of the 90-region parcellation.
pub const DEFAULT_NODES: usize = 90;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Length of the strict upper triangle of an `n×n` matrix.
pub fn triangle_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Symmetric, zero-diagonal weighted adjacency matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityMatrix {
    n: usize,
    weights: Vec<f64>,
}

impl ConnectivityMatrix {
    /// Builds a matrix from row-major weights and checks every invariant
    /// (symmetry, zero diagonal, values in `[0, 1]`).
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::dim(format!(
                "{n}x{n} matrix needs {} values, got {}",
                n * n,
                weights.len()
            )));
        }
        let m = ConnectivityMatrix { n, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dim("rows must form a square matrix"));
        }
        Self::new(n, rows.concat())
    }

    pub fn zeros(n: usize) -> Self {
        ConnectivityMatrix {
            n,
            weights: vec![0.0; n * n],
        }
    }

    /// Mirrors a row-major strict-upper-triangle vector into a symmetric
    /// matrix with zero diagonal. Values are not clamped or range-checked.
    pub fn from_upper_triangle(v: &[f64], n: usize) -> Result<Self> {
        if v.len() != triangle_len(n) {
            return Err(Error::dim(format!(
                "n={n} needs an upper-triangle vector of length {}, got {}",
                triangle_len(n),
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite upper-triangle entry".into()));
        }
        let mut weights = vec![0.0; n * n];
        let mut q = 0;
        for i in 0..n {
            for j in i + 1..n {
                weights[i * n + j] = v[q];
                weights[j * n + i] = v[q];
                q += 1;
            }
        }
        Ok(ConnectivityMatrix { n, weights })
    }

    /// Row-major strict upper triangle, the inverse of [`Self::from_upper_triangle`].
    pub fn to_upper_triangle(&self) -> Vec<f64> {
        let n = self.n;
        let mut v = Vec::with_capacity(triangle_len(n));
        for i in 0..n {
            v.extend_from_slice(&self.weights[i * n + i + 1..(i + 1) * n]);
        }
        v
    }

    /// Divides raw nonnegative counts by their largest off-diagonal entry.
    /// An all-zero matrix maps to itself.
    pub fn normalize_minmax(n: usize, raw: &[f64]) -> Result<Self> {
        if raw.len() != n * n {
            return Err(Error::dim("raw count matrix has the wrong size"));
        }
        check_structure(n, raw)?;
        if let Some(x) = raw.iter().find(|x| **x < 0.0) {
            return Err(Error::Validation(format!("negative count {x}")));
        }
        let max = raw.iter().copied().fold(0.0, f64::max);
        let weights = if max > 0.0 {
            raw.iter().map(|x| x / max).collect()
        } else {
            raw.to_vec()
        };
        Ok(ConnectivityMatrix { n, weights })
    }

    pub fn validate(&self) -> Result<()> {
        check_structure(self.n, &self.weights)?;
        if let Some(x) = self.weights.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Validation(format!("weight {x} outside [0, 1]")));
        }
        Ok(())
    }

    /// Clamps into `[0, 1]` in place.
    pub fn clamp_unit(&mut self) {
        for w in &mut self.weights {
            *w = w.clamp(0.0, 1.0);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// Row-major `n×n` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        ConnectivityMatrix { n, weights: w }
    }
}

fn check_structure(n: usize, w: &[f64]) -> Result<()> {
    if let Some(x) = w.iter().find(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("non-finite weight {x}")));
    }
    for i in 0..n {
        if w[i * n + i] != 0.0 {
            return Err(Error::Validation(format!("nonzero diagonal at node {i}")));
        }
        for j in i + 1..n {
            if w[i * n + j] != w[j * n + i] {
                return Err(Error::Validation(format!(
                    "asymmetric entry ({i},{j}): {} vs {}",
                    w[i * n + j],
                    w[j * n + i]
                )));
            }
        }
    }
    Ok(())
}

/// Binary diagnosis label: 0 = control (CN), 1 = disease (AD).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ClassLabel {
    Control,
    Disease,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Control, ClassLabel::Disease];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Control => 0,
            ClassLabel::Disease => 1,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ClassLabel::Control => "CN",
            ClassLabel::Disease => "AD",
        }
    }

    pub fn other(self) -> Self {
        match self {
            ClassLabel::Control => ClassLabel::Disease,
            ClassLabel::Disease => ClassLabel::Control,
        }
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(ClassLabel::Control),
            1 => Ok(ClassLabel::Disease),
            _ => Err(format!("class label must be 0 or 1, got {v}")),
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(c: ClassLabel) -> u8 {
        c.index() as u8
    }
}

/// Where a sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Smote,
    Adasyn,
    Gan,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Smote => "smote",
            Provenance::Adasyn => "adasyn",
            Provenance::Gan => "gan",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Provenance::Real),
            "smote" => Ok(Provenance::Smote),
            "adasyn" => Ok(Provenance::Adasyn),
            "gan" => Ok(Provenance::Gan),
            _ => Err(Error::Config(format!("unknown provenance {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub matrix: ConnectivityMatrix,
    pub label: ClassLabel,
    pub provenance: Provenance,
}

/// Ordered collection of labelled matrices sharing one node count.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    n: usize,
    samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(n: usize) -> Self {
        LabeledDataset {
            n,
            samples: Vec::new(),
        }
    }

    pub fn from_samples(n: usize, samples: Vec<Sample>) -> Result<Self> {
        let mut d = Self::new(n);
        for s in samples {
            d.push(s)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, s: Sample) -> Result<()> {
        if s.matrix.n() != self.n {
            return Err(Error::dim(format!(
                "dataset has n={}, sample has n={}",
                self.n,
                s.matrix.n()
            )));
        }
        self.samples.push(s);
        Ok(())
    }

    pub fn extend(&mut self, other: &LabeledDataset) -> Result<()> {
        for s in &other.samples {
            self.push(s.clone())?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// The subset with the given label, in order.
    pub fn of_class(&self, label: ClassLabel) -> LabeledDataset {
        self.filter(|s| s.label == label)
    }

    pub fn filter(&self, keep: impl Fn(&Sample) -> bool) -> LabeledDataset {
        LabeledDataset {
            n: self.n,
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            n: self.n,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn matrices(&self) -> impl Iterator<Item = &ConnectivityMatrix> {
        self.samples.iter().map(|s| &s.matrix)
    }

    pub fn require_both_classes(&self) -> Result<()> {
        for c in ClassLabel::ALL {
            if self.count(c) == 0 {
                return Err(Error::EmptyDataset(format!(
                    "no samples of class {}",
                    c.short_name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    label: ClassLabel,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n: usize,
    samples: Vec<ManifestEntry>,
}

/// Parses a matrix CSV (`n` lines of `n` comma-separated floats).
pub fn parse_matrix_csv(text: &str) -> std::result::Result<ConnectivityMatrix, String> {
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(li, line)| {
            line.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("line {}: {e} ({:?})", li + 1, f.trim()))
                })
                .collect::<std::result::Result<Vec<f64>, String>>()
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    ConnectivityMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

pub fn matrix_to_csv(m: &ConnectivityMatrix) -> String {
    let mut s = String::with_capacity(m.n() * m.n() * 8);
    for i in 0..m.n() {
        for (j, w) in m.row(i).iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&w.to_string());
        }
        s.push('\n');
    }
    s
}

/// Loads a dataset from a manifest (or a directory holding one), validating
/// every matrix.
pub fn load_dataset(manifest_path: &Path) -> Result<LabeledDataset> {
    if manifest_path.is_dir() {
        return load_dataset(&manifest_path.join(MANIFEST_FILE));
    }
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::load(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::load(manifest_path, e))?;
    if manifest.samples.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "manifest {} lists no samples",
            manifest_path.display()
        )));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let loaded = par::map_slice(&manifest.samples, |e| -> Result<Sample> {
        let path = dir.join(&e.file);
        let text = fs::read_to_string(&path).map_err(|err| Error::load(&path, err))?;
        let matrix = parse_matrix_csv(&text).map_err(|err| Error::load(&path, err))?;
        if matrix.n() != manifest.n {
            return Err(Error::load(
                &path,
                format!(
                    "matrix is {0}x{0}, manifest says n={1}",
                    matrix.n(),
                    manifest.n
                ),
            ));
        }
        Ok(Sample {
            matrix,
            label: e.label,
            provenance: e.provenance,
        })
    });
    let samples = loaded.into_iter().collect::<Result<Vec<_>>>()?;
    LabeledDataset::from_samples(manifest.n, samples)
}

/// Writes one CSV per sample plus `manifest.json` into `dir` (created if needed).
/// Returns the manifest path.
pub fn save_dataset(d: &LabeledDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(d.len());
    for (i, s) in d.samples().iter().enumerate() {
        let file = format!("sample_{i:05}.csv");
        fs::write(dir.join(&file), matrix_to_csv(&s.matrix))?;
        entries.push(ManifestEntry {
            file,
            label: s.label,
            provenance: s.provenance,
        });
    }
    let manifest = Manifest {
        n: d.n(),
        samples: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
