//! Weighted topology features: edge weights, node strength, and weighted
//! global/local efficiency.
//!
//! Edge length is the reciprocal weight (`1/w`, absent edges are infinitely
//! long). Shortest paths use Dijkstra from every source: a binary-heap
//! variant on sparse graphs, and the array-scan variant on dense ones where
//! it is asymptotically cheaper. Local efficiency of a node is the global
//! efficiency of the subgraph induced by its neighbours, using that
//! subgraph's own weights.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::connmat::{ConnectivityMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::par;

/// One value per node.
pub type NodeFeatureVector = Vec<f64>;

pub fn node_strength(m: &ConnectivityMatrix) -> NodeFeatureVector {
    (0..m.n()).map(|i| m.row(i).iter().sum()).collect()
}

pub fn edge_weight_vector(m: &ConnectivityMatrix) -> Vec<f64> {
    m.to_upper_triangle()
}

fn lengths(n: usize, w: &[f64]) -> Vec<f64> {
    w.iter()
        .enumerate()
        .map(|(k, &x)| {
            if k / n != k % n && x > 0.0 {
                1.0 / x
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    // reversed so BinaryHeap pops the smallest distance; ties by node index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra_heap(adj: &[Vec<(usize, f64)>], src: usize, dist: &mut [f64]) {
    dist.fill(f64::INFINITY);
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, src));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, l) in &adj[u] {
            let nd = d + l;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
}

fn dijkstra_dense(len: &[f64], n: usize, src: usize, dist: &mut [f64], done: &mut [bool]) {
    dist.fill(f64::INFINITY);
    done.fill(false);
    dist[src] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for v in 0..n {
            if !done[v] && dist[v] < best {
                best = dist[v];
                u = v;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        let row = &len[u * n..(u + 1) * n];
        for v in 0..n {
            let nd = best + row[v];
            if !done[v] && nd < dist[v] {
                dist[v] = nd;
            }
        }
    }
}

/// All-pairs shortest path lengths (row-major `n×n`) on a length matrix.
fn all_pairs(n: usize, len: &[f64]) -> Vec<f64> {
    let edges = len.iter().filter(|l| l.is_finite()).count();
    let mut out = vec![0.0; n * n];
    if n == 0 {
        return out;
    }
    if edges * 4 >= n * n {
        let mut done = vec![false; n];
        for (s, row) in out.chunks_exact_mut(n).enumerate() {
            dijkstra_dense(len, n, s, row, &mut done);
        }
    } else {
        let adj: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|u| {
                (0..n)
                    .filter_map(|v| {
                        let l = len[u * n + v];
                        l.is_finite().then_some((v, l))
                    })
                    .collect()
            })
            .collect();
        for (s, row) in out.chunks_exact_mut(n).enumerate() {
            dijkstra_heap(&adj, s, row);
        }
    }
    out
}

/// Shortest weighted path lengths between all node pairs, row-major `n×n`.
/// Unreachable pairs are `+∞`; the diagonal is 0.
pub fn shortest_path_lengths(m: &ConnectivityMatrix) -> Vec<f64> {
    all_pairs(m.n(), &lengths(m.n(), m.weights()))
}

fn efficiency_from_lengths(n: usize, len: &[f64]) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let d = all_pairs(n, len);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && d[i * n + j].is_finite() {
                s += 1.0 / d[i * n + j];
            }
        }
    }
    s / (n * (n - 1)) as f64
}

/// Mean inverse shortest-path length over ordered node pairs.
pub fn global_efficiency(m: &ConnectivityMatrix) -> Result<f64> {
    if m.n() < 2 {
        return Err(Error::dim("global efficiency needs at least two nodes"));
    }
    Ok(efficiency_from_lengths(m.n(), &lengths(m.n(), m.weights())))
}

/// Global efficiency of each node's neighbour-induced subgraph (0 with fewer
/// than two neighbours).
pub fn local_efficiency(m: &ConnectivityMatrix) -> NodeFeatureVector {
    let n = m.n();
    let len = lengths(n, m.weights());
    let mut sub = Vec::new();
    (0..n)
        .map(|i| {
            let nb: Vec<usize> = (0..n).filter(|&j| m.get(i, j) > 0.0).collect();
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            sub.clear();
            for &a in &nb {
                sub.extend(nb.iter().map(|&b| len[a * n + b]));
            }
            efficiency_from_lengths(k, &sub)
        })
        .collect()
}

/// Every topology feature of one matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFeatures {
    pub edge_weights: Vec<f64>,
    pub strength: NodeFeatureVector,
    pub local_efficiency: NodeFeatureVector,
    pub global_efficiency: f64,
}

pub fn features(m: &ConnectivityMatrix) -> Result<GraphFeatures> {
    Ok(GraphFeatures {
        edge_weights: edge_weight_vector(m),
        strength: node_strength(m),
        local_efficiency: local_efficiency(m),
        global_efficiency: global_efficiency(m)?,
    })
}

/// Features of every sample, in dataset order (computed in parallel).
pub fn dataset_features(d: &LabeledDataset) -> Result<Vec<GraphFeatures>> {
    par::map_slice(d.samples(), |s| features(&s.matrix))
        .into_iter()
        .collect()
}

fn summary(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// CSV with one row per sample: label, global efficiency and mean/std of the
/// vector-valued features.
pub fn metrics_csv(d: &LabeledDataset) -> Result<String> {
    let feats = dataset_features(d)?;
    let mut s = String::from(
        "index,label,provenance,global_efficiency,strength_mean,strength_std,local_efficiency_mean,local_efficiency_std,edge_weight_mean,edge_weight_std\n",
    );
    for (i, (sample, f)) in d.samples().iter().zip(&feats).enumerate() {
        let (sm, ss) = summary(&f.strength);
        let (lm, ls) = summary(&f.local_efficiency);
        let (em, es) = summary(&f.edge_weights);
        s.push_str(&format!(
            "{i},{},{},{},{sm},{ss},{lm},{ls},{em},{es}\n",
            sample.label.index(),
            sample.provenance,
            f.global_efficiency
        ));
    }
    Ok(s)
}
