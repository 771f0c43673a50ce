//! Downstream evaluation: a GraphConv classifier trained under stratified
//! cross-validation on real, synthetic, or combined training sets.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::connmat::{ClassLabel, ConnectivityMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::gan::{classifier_nll, sample_like, train as train_gan, GanConfig};
use crate::graphmetrics::node_strength;
use crate::nn::{
    adam_step, dense, init_params, AdamState, BoundParams, ModelParams, ParamSpec, DEFAULT_LR,
};
use crate::oversample::{adasyn, smote_class, OversampleConfig};
use crate::par;
use crate::rng::{derive_seed, rng};

pub const HIDDEN: usize = 64;
pub const HEAD: usize = 32;
pub const BATCH: usize = 16;
pub const MAX_EPOCHS: usize = 100;
pub const PATIENCE: usize = 10;
/// Equal stratified parts: 3 train, 1 validation, 1 test per fold.
pub const PARTS: usize = 5;
pub const FOLDS: usize = 4;

/// Weighted undirected graph with per-node features
/// `one_hot(region) ⊕ strength / (n − 1)` of width `n + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeGraph {
    pub n: usize,
    /// Undirected edges `(i, j, w)` with `i < j` and `w > 0`.
    pub edges: Vec<(usize, usize, f64)>,
    /// Row-major `[n, feature_dim]`.
    pub features: Vec<f64>,
    pub feature_dim: usize,
}

impl NodeGraph {
    /// Region index of node `i`: position of the largest entry in its
    /// one-hot block (first on ties).
    pub fn region(&self, i: usize) -> usize {
        let row = &self.features[i * self.feature_dim..i * self.feature_dim + self.n];
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        best
    }

    /// Nodes sorted by region identity. Aggregations run in this order, so
    /// relabelling nodes together with their identity features changes
    /// nothing, not even rounding.
    fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by_key(|&i| (self.region(i), i));
        order
    }

    /// Dense weighted adjacency and features, rows in canonical order.
    fn dense(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let order = self.canonical_order();
        let mut pos = vec![0; n];
        for (p, &i) in order.iter().enumerate() {
            pos[i] = p;
        }
        let mut adj = vec![0.0; n * n];
        for &(i, j, w) in &self.edges {
            adj[pos[i] * n + pos[j]] = w;
            adj[pos[j] * n + pos[i]] = w;
        }
        let f = self.feature_dim;
        let mut feats = Vec::with_capacity(n * f);
        for &i in &order {
            feats.extend_from_slice(&self.features[i * f..(i + 1) * f]);
        }
        (adj, feats)
    }

    /// Relabels node `i` as `perm[i]`, carrying edges and features along.
    pub fn permuted(&self, perm: &[usize]) -> NodeGraph {
        let f = self.feature_dim;
        let mut features = vec![0.0; self.features.len()];
        for (i, &p) in perm.iter().enumerate() {
            features[p * f..(p + 1) * f].copy_from_slice(&self.features[i * f..(i + 1) * f]);
        }
        let edges = self
            .edges
            .iter()
            .map(|&(i, j, w)| {
                let (a, b) = (perm[i], perm[j]);
                (a.min(b), a.max(b), w)
            })
            .collect();
        NodeGraph {
            n: self.n,
            edges,
            features,
            feature_dim: f,
        }
    }
}

/// Every strictly positive upper-triangle entry becomes an edge.
pub fn build_graph(m: &ConnectivityMatrix) -> NodeGraph {
    let n = m.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w = m.get(i, j);
            if w > 0.0 {
                edges.push((i, j, w));
            }
        }
    }
    let f = n + 1;
    let scale = 1.0 / (n - 1).max(1) as f64;
    let mut features = vec![0.0; n * f];
    for (i, s) in node_strength(m).into_iter().enumerate() {
        features[i * f + i] = 1.0;
        features[i * f + n] = s * scale;
    }
    NodeGraph {
        n,
        edges,
        features,
        feature_dim: f,
    }
}

/// One GraphConv layer, `h' = relu(h·W_self + (A·h)·W_nbr + b)` on `h: [B, n, d]`, `adj: [B, n, n]`
/// (weighted, symmetric). Node `i` aggregates `Σ_j adj[i][j]·h_j`.
pub fn graphconv_layer(g: &mut Graph, h: Var, adj: Var, ws: Var, wn: Var, b: Var) -> Result<Var> {
    let [batch, n, d] = *g.shape(h) else {
        return Err(Error::dim("graphconv expects [B, n, d]"));
    };
    let out = g.shape(ws)[1];
    let flat = g.reshape(h, &[batch * n, d])?;
    let own = g.matmul(flat, ws)?;
    let agg = g.batch_matmul(adj, h, false, false)?;
    let agg = g.reshape(agg, &[batch * n, d])?;
    let nbr = g.matmul(agg, wn)?;
    let s = g.add(own, nbr)?;
    let s = g.add_bias(s, b)?;
    let s = g.relu(s);
    g.reshape(s, &[batch, n, out])
}

/// Two GraphConv layers (`feature_dim → 64 → 64`), mean pooling, then
/// `64 → 32 → 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphConvArch {
    pub feature_dim: usize,
}

impl GraphConvArch {
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let f = self.feature_dim;
        // The neighbor sum spans up to `n` weighted terms per input channel.
        let n = f.saturating_sub(1).max(1);
        vec![
            ParamSpec::he("gc1.self", &[f, HIDDEN], f),
            ParamSpec::he("gc1.nbr", &[f, HIDDEN], f * n),
            ParamSpec::zeros("gc1.b", &[HIDDEN]),
            ParamSpec::he("gc2.self", &[HIDDEN, HIDDEN], HIDDEN),
            ParamSpec::he("gc2.nbr", &[HIDDEN, HIDDEN], HIDDEN * n),
            ParamSpec::zeros("gc2.b", &[HIDDEN]),
            ParamSpec::he("fc0.w", &[HIDDEN, HEAD], HIDDEN),
            ParamSpec::zeros("fc0.b", &[HEAD]),
            ParamSpec::he("fc1.w", &[HEAD, 2], HEAD),
            ParamSpec::zeros("fc1.b", &[2]),
        ]
    }

    /// Class logits `[B, 2]` for `adj: [B, n, n]`, `x: [B, n, feature_dim]`.
    pub fn forward(&self, g: &mut Graph, p: &BoundParams, adj: Var, x: Var) -> Result<Var> {
        let [batch, n, _] = *g.shape(x) else {
            return Err(Error::dim("graphconv expects [B, n, d]"));
        };
        let h = graphconv_layer(
            g,
            x,
            adj,
            p.get("gc1.self")?,
            p.get("gc1.nbr")?,
            p.get("gc1.b")?,
        )?;
        let h = graphconv_layer(
            g,
            h,
            adj,
            p.get("gc2.self")?,
            p.get("gc2.nbr")?,
            p.get("gc2.b")?,
        )?;
        let pooled = g.reduce_to(h, &[batch, 1, HIDDEN])?;
        let pooled = g.reshape(pooled, &[batch, HIDDEN])?;
        let pooled = g.scale(pooled, 1.0 / n as f64);
        let z = dense(g, pooled, p.get("fc0.w")?, p.get("fc0.b")?)?;
        let z = g.relu(z);
        dense(g, z, p.get("fc1.w")?, p.get("fc1.b")?)
    }
}

/// Softmax probabilities `[p(CN), p(AD)]` for one graph.
pub fn graphconv_forward(params: &ModelParams, graph: &NodeGraph) -> Result<[f64; 2]> {
    let arch = GraphConvArch {
        feature_dim: graph.feature_dim,
    };
    let enc = Encoded::new(std::slice::from_ref(graph));
    let mut g = Graph::new();
    let p = params.bind(&mut g)?;
    let (adj, x) = enc.batch(&mut g, &[0])?;
    let logits = arch.forward(&mut g, &p, adj, x)?;
    let lp = g.log_softmax(logits)?;
    let v = g.value(lp).data();
    Ok([v[0].exp(), v[1].exp()])
}

/// Dense encodings of a list of graphs, ready for batching.
struct Encoded {
    n: usize,
    f: usize,
    adj: Vec<Vec<f64>>,
    feats: Vec<Vec<f64>>,
}

impl Encoded {
    fn new(graphs: &[NodeGraph]) -> Self {
        let (n, f) = graphs.first().map_or((0, 0), |g| (g.n, g.feature_dim));
        let (adj, feats) = par::map_slice(graphs, NodeGraph::dense).into_iter().unzip();
        Encoded { n, f, adj, feats }
    }

    fn batch(&self, g: &mut Graph, idx: &[usize]) -> Result<(Var, Var)> {
        let (n, f) = (self.n, self.f);
        let mut a = Vec::with_capacity(idx.len() * n * n);
        let mut x = Vec::with_capacity(idx.len() * n * f);
        for &i in idx {
            a.extend_from_slice(&self.adj[i]);
            x.extend_from_slice(&self.feats[i]);
        }
        let a = g.leaf(Tensor::new(&[idx.len(), n, n], a)?)?;
        let x = g.leaf(Tensor::new(&[idx.len(), n, f], x)?)?;
        Ok((a, x))
    }
}

struct EncodedSet {
    enc: Encoded,
    labels: Vec<ClassLabel>,
}

impl EncodedSet {
    fn new(d: &LabeledDataset) -> Self {
        let graphs: Vec<NodeGraph> = par::map_slice(d.samples(), |s| build_graph(&s.matrix));
        EncodedSet {
            enc: Encoded::new(&graphs),
            labels: d.iter().map(|s| s.label).collect(),
        }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    /// Mean loss and predicted labels over the whole set.
    fn evaluate(
        &self,
        arch: &GraphConvArch,
        params: &ModelParams,
    ) -> Result<(f64, Vec<ClassLabel>)> {
        let mut total = 0.0;
        let mut preds = Vec::with_capacity(self.len());
        let idx: Vec<usize> = (0..self.len()).collect();
        for chunk in idx.chunks(BATCH * 4) {
            let mut g = Graph::new();
            let p = params.bind(&mut g)?;
            let (a, x) = self.enc.batch(&mut g, chunk)?;
            let logits = arch.forward(&mut g, &p, a, x)?;
            let labels: Vec<ClassLabel> = chunk.iter().map(|&i| self.labels[i]).collect();
            let loss = classifier_nll(&mut g, logits, &labels)?;
            total += g.value(loss).item() * chunk.len() as f64;
            preds.extend(g.value(logits).data().chunks_exact(2).map(|r| {
                if r[1] > r[0] {
                    ClassLabel::Disease
                } else {
                    ClassLabel::Control
                }
            }));
        }
        Ok((total / self.len() as f64, preds))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedClassifier {
    pub params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Cross-entropy training with Adam, minibatches of 16, at most 100 epochs,
/// stopping after 10 epochs without a lower validation loss. Returns the
/// parameters of the best validation epoch.
pub fn train_classifier(
    train: &LabeledDataset,
    val: &LabeledDataset,
    seed: u64,
) -> Result<TrainedClassifier> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("classifier training split".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptyDataset("classifier validation split".into()));
    }
    if train.n() != val.n() {
        return Err(Error::dim("training and validation node counts differ"));
    }
    let arch = GraphConvArch {
        feature_dim: train.n() + 1,
    };
    let tr = EncodedSet::new(train);
    let va = EncodedSet::new(val);
    let mut params = init_params(&arch.param_specs(), derive_seed(seed, &[0]))?;
    let mut opt = AdamState::new(&params, DEFAULT_LR);
    let mut order_rng = rng(derive_seed(seed, &[1]));
    let mut order: Vec<usize> = (0..tr.len()).collect();
    let mut best = (f64::INFINITY, 0, params.clone());
    let mut log = Vec::new();
    for epoch in 0..MAX_EPOCHS {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for chunk in order.chunks(BATCH) {
            let mut g = Graph::new();
            let p = params.bind(&mut g)?;
            let (a, x) = tr.enc.batch(&mut g, chunk)?;
            let logits = arch.forward(&mut g, &p, a, x)?;
            let labels: Vec<ClassLabel> = chunk.iter().map(|&i| tr.labels[i]).collect();
            let loss = classifier_nll(&mut g, logits, &labels)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Diverged {
                    step: epoch,
                    what: "classifier loss".into(),
                });
            }
            total += lv * chunk.len() as f64;
            let grads = g.grad(loss, &p.vars(), false)?;
            let grads = params.gradients_from(&g, &grads)?;
            adam_step(&mut params, &grads, &mut opt)?;
        }
        let (val_loss, preds) = va.evaluate(&arch, &params)?;
        log.push(EpochLog {
            epoch,
            train_loss: total / tr.len() as f64,
            val_loss,
            val_accuracy: Metrics::from_predictions(&va.labels, &preds).accuracy,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        } else if epoch - best.1 >= PATIENCE {
            break;
        }
    }
    Ok(TrainedClassifier {
        params: best.2,
        best_epoch: best.1,
        log,
    })
}

/// Predicted labels for every sample of `d`.
pub fn predict(params: &ModelParams, d: &LabeledDataset) -> Result<Vec<ClassLabel>> {
    if d.is_empty() {
        return Ok(Vec::new());
    }
    let arch = GraphConvArch {
        feature_dim: d.n() + 1,
    };
    Ok(EncodedSet::new(d).evaluate(&arch, params)?.1)
}

/// Accuracy, precision and recall with class 1 (AD) as the positive class.
/// Precision (recall) is 0 when nothing is predicted (present) positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

impl Metrics {
    pub fn from_predictions(truth: &[ClassLabel], pred: &[ClassLabel]) -> Self {
        let pos = ClassLabel::Disease;
        let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
        for (&t, &p) in truth.iter().zip(pred) {
            correct += usize::from(t == p);
            match (t == pos, p == pos) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Metrics {
            accuracy: ratio(correct, truth.len()),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fneg),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Baseline,
    FakeOnly,
    Combined,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::FakeOnly, Mode::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::FakeOnly => "fake-only",
            Mode::Combined => "combined",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Smote,
    Adasyn,
    Gan,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Smote, Method::Adasyn, Method::Gan];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Smote => "smote",
            Method::Adasyn => "adasyn",
            Method::Gan => "gan",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// How synthetic training data is produced from a training partition.
#[derive(Clone, Debug, PartialEq)]
pub enum Augmenter {
    Smote(OversampleConfig),
    Adasyn(OversampleConfig),
    Gan(GanConfig),
}

impl Augmenter {
    pub fn method(&self) -> Method {
        match self {
            Augmenter::Smote(_) => Method::Smote,
            Augmenter::Adasyn(_) => Method::Adasyn,
            Augmenter::Gan(_) => Method::Gan,
        }
    }

    /// As many synthetic samples per class as `train` holds real ones,
    /// computed from `train` alone.
    pub fn synthesize(&self, train: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
        let mut out = LabeledDataset::new(train.n());
        match self {
            Augmenter::Smote(cfg) | Augmenter::Adasyn(cfg) => {
                let cfg = OversampleConfig {
                    seed,
                    ..cfg.clone()
                };
                for c in ClassLabel::ALL {
                    let count = train.count(c);
                    let part = if matches!(self, Augmenter::Smote(_)) {
                        smote_class(train, &cfg, c, count)?
                    } else {
                        adasyn(train, &cfg, c, count)?
                    };
                    out.extend(&part)?;
                }
            }
            Augmenter::Gan(cfg) => {
                let cfg = GanConfig {
                    seed,
                    n: train.n(),
                    ..cfg.clone()
                };
                let trained = train_gan(train, &cfg)?;
                out = sample_like(&trained.generator, train, derive_seed(seed, &[1]))?;
            }
        }
        Ok(out)
    }
}

/// Stratified split into `PARTS` parts: each class is shuffled and dealt
/// round-robin, so part sizes per class differ by at most one.
pub fn stratified_parts(d: &LabeledDataset, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut parts = vec![Vec::new(); PARTS];
    for c in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..d.len())
            .filter(|&i| d.samples()[i].label == c)
            .collect();
        if idx.len() < PARTS {
            return Err(Error::EmptyDataset(format!(
                "class {} has {} samples; stratifying into {PARTS} parts needs at least {PARTS}",
                c.short_name(),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng(derive_seed(seed, &[c.index() as u64])));
        for (k, i) in idx.into_iter().enumerate() {
            parts[k % PARTS].push(i);
        }
    }
    Ok(parts)
}

/// Indices of (train, validation, test) for fold `f`: test is part `f`,
/// validation part `f + 1`, training the other three.
pub fn fold_split(parts: &[Vec<usize>], f: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let test = parts[f].clone();
    let val = parts[(f + 1) % PARTS].clone();
    let train = (0..PARTS)
        .filter(|&p| p != f && p != (f + 1) % PARTS)
        .flat_map(|p| parts[p].iter().copied())
        .collect();
    (train, val, test)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub repeat: usize,
    pub best_epoch: usize,
    pub val: Metrics,
    pub test: Metrics,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return MeanStd::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub mode: Mode,
    /// Source of synthetic data; `None` in baseline mode.
    pub method: Option<Method>,
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    pub fn summary(&self, pick: impl Fn(&FoldResult) -> f64) -> MeanStd {
        MeanStd::of(&self.folds.iter().map(pick).collect::<Vec<_>>())
    }

    pub fn method_name(&self) -> &'static str {
        self.method.map_or("none", Method::as_str)
    }

    pub fn test_accuracy(&self) -> MeanStd {
        self.summary(|f| f.test.accuracy)
    }

    pub const CSV_HEADER: &'static str = "mode,method,\
val_accuracy_mean,val_accuracy_std,val_precision_mean,val_precision_std,val_recall_mean,val_recall_std,\
test_accuracy_mean,test_accuracy_std,test_precision_mean,test_precision_std,test_recall_mean,test_recall_std";

    /// One summary row (no header) in the column order of [`Self::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{}", self.mode, self.method_name());
        let cols: [fn(&FoldResult) -> f64; 6] = [
            |f| f.val.accuracy,
            |f| f.val.precision,
            |f| f.val.recall,
            |f| f.test.accuracy,
            |f| f.test.precision,
            |f| f.test.recall,
        ];
        for c in cols {
            let m = self.summary(c);
            let _ = write!(s, ",{:?},{:?}", m.mean, m.std);
        }
        s
    }

    pub const FOLDS_CSV_HEADER: &'static str = "mode,method,fold,repeat,best_epoch,\
val_accuracy,val_precision,val_recall,test_accuracy,test_precision,test_recall";

    /// Per-fold, per-repeat rows (no header).
    pub fn folds_csv_rows(&self) -> String {
        let mut s = String::new();
        for f in &self.folds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
                self.mode,
                self.method_name(),
                f.fold,
                f.repeat,
                f.best_epoch,
                f.val.accuracy,
                f.val.precision,
                f.val.recall,
                f.test.accuracy,
                f.test.precision,
                f.test.recall
            );
        }
        s
    }
}

/// Synthetic training sets, one per fold, each built from that fold's
/// training partition only.
pub fn fold_fakes(
    real: &LabeledDataset,
    augmenter: &Augmenter,
    seed: u64,
) -> Result<Vec<LabeledDataset>> {
    let parts = stratified_parts(real, seed)?;
    (0..FOLDS)
        .map(|f| {
            let (train, _, _) = fold_split(&parts, f);
            augmenter.synthesize(&real.select(&train), derive_seed(seed, &[100, f as u64]))
        })
        .collect()
}

/// Cross-validated evaluation with precomputed per-fold synthetic sets
/// (ignored, like `method`, in baseline mode). Each fold is trained
/// `repeats` times with fresh classifier seeds on the same split.
pub fn cross_validate_with(
    real: &LabeledDataset,
    fakes: Option<&[LabeledDataset]>,
    method: Option<Method>,
    mode: Mode,
    repeats: usize,
    seed: u64,
) -> Result<CvReport> {
    real.require_both_classes()?;
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let parts = stratified_parts(real, seed)?;
    if mode != Mode::Baseline && fakes.is_none_or(|f| f.len() != FOLDS) {
        return Err(Error::Config(format!(
            "{mode} mode needs one synthetic set per fold"
        )));
    }
    let jobs: Vec<(usize, usize)> = (0..FOLDS)
        .flat_map(|f| (0..repeats).map(move |r| (f, r)))
        .collect();
    let results = par::map_slice(&jobs, |&(f, r)| -> Result<FoldResult> {
        let (tr, va, te) = fold_split(&parts, f);
        let real_train = real.select(&tr);
        let train = match mode {
            Mode::Baseline => real_train,
            Mode::FakeOnly => fakes.expect("checked above")[f].clone(),
            Mode::Combined => {
                let mut t = real_train;
                t.extend(&fakes.expect("checked above")[f])?;
                t
            }
        };
        let (val, test) = (real.select(&va), real.select(&te));
        let trained =
            train_classifier(&train, &val, derive_seed(seed, &[200, f as u64, r as u64]))?;
        let score = |d: &LabeledDataset| -> Result<Metrics> {
            let truth: Vec<ClassLabel> = d.iter().map(|s| s.label).collect();
            Ok(Metrics::from_predictions(
                &truth,
                &predict(&trained.params, d)?,
            ))
        };
        Ok(FoldResult {
            fold: f,
            repeat: r,
            best_epoch: trained.best_epoch,
            val: score(&val)?,
            test: score(&test)?,
        })
    });
    Ok(CvReport {
        mode,
        method: if mode == Mode::Baseline { None } else { method },
        folds: results.into_iter().collect::<Result<_>>()?,
    })
}

/// Full protocol for one (method, mode): per-fold synthesis from the fold's
/// training data, then [`cross_validate_with`].
pub fn cross_validate(
    real: &LabeledDataset,
    augmenter: &Augmenter,
    mode: Mode,
    repeats: usize,
    seed: u64,
) -> Result<CvReport> {
    if mode == Mode::Baseline {
        return cross_validate_with(real, None, None, mode, repeats, seed);
    }
    let fakes = fold_fakes(real, augmenter, seed)?;
    cross_validate_with(
        real,
        Some(&fakes),
        Some(augmenter.method()),
        mode,
        repeats,
        seed,
    )
}
