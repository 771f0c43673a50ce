//! Numeric kernels behind the graph operations.
//!
//! Dense products go through `matrixmultiply::dgemm` with explicit strides so
//! transposed and strided operands never need a copy.

use super::pool;
use crate::par;

/// Strided view of a row-major matrix: element (i, j) lives at `i*rs + j*cs`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Strides {
    pub rs: usize,
    pub cs: usize,
}

impl Strides {
    pub fn row_major(cols: usize) -> Self {
        Strides { rs: cols, cs: 1 }
    }

    pub fn col_major(rows: usize) -> Self {
        Strides { rs: 1, cs: rows }
    }

    pub fn of(rows: usize, cols: usize, transposed: bool) -> Self {
        if transposed {
            Self::col_major(rows)
        } else {
            Self::row_major(cols)
        }
    }
}

/// `c = a·b + beta·c` for an `m×k` by `k×n` product.
///
/// The slices must cover every strided element they are addressed with.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: Strides,
    b: &[f64],
    sb: Strides,
    beta: f64,
    c: &mut [f64],
    sc: Strides,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let idx = i * sc.rs + j * sc.cs;
                c[idx] *= beta;
            }
        }
        return;
    }
    let last = |s: Strides, r: usize, q: usize| (r - 1) * s.rs + (q - 1) * s.cs;
    assert!(last(sa, m, k) < a.len(), "gemm: lhs out of bounds");
    assert!(last(sb, k, n) < b.len(), "gemm: rhs out of bounds");
    assert!(last(sc, m, n) < c.len(), "gemm: output out of bounds");
    // SAFETY: the asserts above bound every addressed element of the three
    // operands, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.rs as isize,
            sa.cs as isize,
            b.as_ptr(),
            sb.rs as isize,
            sb.cs as isize,
            beta,
            c.as_mut_ptr(),
            sc.rs as isize,
            sc.cs as isize,
        );
    }
}

const ROW_BLOCK: usize = 64;

/// `op(a)·op(b)` where `a` is stored `[m,k]` (or `[k,m]` when `ta`) and `b`
/// is stored `[k,n]` (or `[n,k]` when `tb`). Output is row-major `[m,n]`.
pub(crate) fn matmul(
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
) -> Vec<f64> {
    let mut out = pool::zeros(m * n);
    if n == 0 {
        return out;
    }
    let sa = Strides::of(m, k, ta);
    let sb = Strides::of(k, n, tb);
    par::for_each_chunk_mut(&mut out, ROW_BLOCK * n, |blk, c| {
        let i0 = blk * ROW_BLOCK;
        let rows = c.len() / n;
        gemm(
            rows,
            k,
            n,
            &a[i0 * sa.rs..],
            sa,
            b,
            sb,
            0.0,
            c,
            Strides::row_major(n),
        );
    });
    out
}

/// Batched `op(a_b)·op(b_b)` with `a: [B,m,k]` and `b: [B,k,n]` (pre-transpose).
#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_matmul(
    a: &[f64],
    b: &[f64],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
) -> Vec<f64> {
    let mut out = pool::zeros(batch * m * n);
    if m * n == 0 {
        return out;
    }
    let sa = Strides::of(m, k, ta);
    let sb = Strides::of(k, n, tb);
    par::for_each_chunk_mut(&mut out, m * n, |bi, c| {
        gemm(
            m,
            k,
            n,
            &a[bi * m * k..(bi + 1) * m * k],
            sa,
            &b[bi * k * n..(bi + 1) * k * n],
            sb,
            0.0,
            c,
            Strides::row_major(n),
        );
    });
    out
}

/// Geometry shared by the three cross-shaped contraction kernels.
///
/// `x: [B,C,n,n]`, `w: [O,C,n]`, `g: [B,O,n]`. With `transposed` the last two
/// axes of `x` are read swapped, turning the row contraction into a column one.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CrossDims {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub n: usize,
    pub transposed: bool,
}

/// `out[b,o,i] = Σ_c Σ_k w[o,c,k]·x[b,c,i,k]`.
pub(crate) fn cross_contract(x: &[f64], w: &[f64], d: CrossDims) -> Vec<f64> {
    let CrossDims { cin, cout, n, .. } = d;
    let nn = n * n;
    let mut out = pool::zeros(d.batch * cout * n);
    if out.is_empty() {
        return out;
    }
    par::for_each_chunk_mut(&mut out, cout * n, |b, ob| {
        let xb = &x[b * cin * nn..(b + 1) * cin * nn];
        if d.transposed {
            // x[b] read as a [(c,k), i] matrix: one product per sample.
            gemm(
                cout,
                cin * n,
                n,
                w,
                Strides::row_major(cin * n),
                xb,
                Strides::row_major(n),
                0.0,
                ob,
                Strides::row_major(n),
            );
            return;
        }
        for c in 0..cin {
            let beta = if c == 0 { 0.0 } else { 1.0 };
            gemm(
                n,
                n,
                cout,
                &xb[c * nn..(c + 1) * nn],
                Strides::row_major(n),
                &w[c * n..],
                Strides { rs: 1, cs: cin * n },
                beta,
                ob,
                Strides { rs: 1, cs: n },
            );
        }
    });
    out
}

/// `x[b,c,i,k] = Σ_o g[b,o,i]·w[o,c,k]` (adjoint of [`cross_contract`] in `x`).
pub(crate) fn cross_spread(g: &[f64], w: &[f64], d: CrossDims) -> Vec<f64> {
    let CrossDims { cin, cout, n, .. } = d;
    let nn = n * n;
    let mut out = pool::zeros(d.batch * cin * nn);
    if out.is_empty() {
        return out;
    }
    par::for_each_chunk_mut(&mut out, cin * nn, |b, xb| {
        let gb = &g[b * cout * n..(b + 1) * cout * n];
        if d.transposed {
            gemm(
                cin * n,
                cout,
                n,
                w,
                Strides { rs: 1, cs: cin * n },
                gb,
                Strides::row_major(n),
                0.0,
                xb,
                Strides::row_major(n),
            );
            return;
        }
        for c in 0..cin {
            gemm(
                n,
                cout,
                n,
                gb,
                Strides { rs: 1, cs: n },
                &w[c * n..],
                Strides { rs: cin * n, cs: 1 },
                0.0,
                &mut xb[c * nn..(c + 1) * nn],
                Strides::row_major(n),
            );
        }
    });
    out
}

/// `w[o,c,k] = Σ_b Σ_i g[b,o,i]·x[b,c,i,k]` (adjoint of [`cross_contract`] in `w`).
pub(crate) fn cross_weight(g: &[f64], x: &[f64], d: CrossDims) -> Vec<f64> {
    let CrossDims { cin, cout, n, .. } = d;
    let nn = n * n;
    let mut out = pool::zeros(cout * cin * n);
    if out.is_empty() {
        return out;
    }
    if d.transposed {
        for b in 0..d.batch {
            let beta = if b == 0 { 0.0 } else { 1.0 };
            gemm(
                cout,
                n,
                cin * n,
                &g[b * cout * n..(b + 1) * cout * n],
                Strides::row_major(n),
                &x[b * cin * nn..(b + 1) * cin * nn],
                Strides { rs: 1, cs: n },
                beta,
                &mut out,
                Strides::row_major(cin * n),
            );
        }
        return out;
    }
    for c in 0..cin {
        for b in 0..d.batch {
            let beta = if b == 0 { 0.0 } else { 1.0 };
            gemm(
                cout,
                n,
                n,
                &g[b * cout * n..(b + 1) * cout * n],
                Strides::row_major(n),
                &x[(b * cin + c) * nn..(b * cin + c + 1) * nn],
                Strides::row_major(n),
                beta,
                &mut out[c * n..],
                Strides { rs: cin * n, cs: 1 },
            );
        }
    }
    out
}

/// `out[r,i,j] = (a[r,i] + b[r,j]) + bias[r]` for `a, b: [R,n]`, `bias: [R]`.
pub(crate) fn outer_sum(a: &[f64], b: &[f64], bias: &[f64], rows: usize, n: usize) -> Vec<f64> {
    pool::build(rows * n * n, n * n, |r, blk| {
        let ar = &a[r * n..(r + 1) * n];
        let br = &b[r * n..(r + 1) * n];
        let c = bias[r];
        for (i, row) in blk.chunks_exact_mut(n).enumerate() {
            let ai = ar[i];
            for (o, &bj) in row.iter_mut().zip(br) {
                o.write((ai + bj) + c);
            }
        }
    })
}

/// Adjoint of [`outer_sum`]: for each `n×n` block of `g`, its row sums, column
/// sums and total, packed as `[R, 2n+1]`.
pub(crate) fn outer_adjoint(g: &[f64], rows: usize, n: usize) -> Vec<f64> {
    let w = 2 * n + 1;
    let mut out = pool::zeros(rows * w);
    par::for_each_chunk_mut(&mut out, w, |r, o| {
        let (rs, rest) = o.split_at_mut(n);
        let (cs, tot) = rest.split_at_mut(n);
        for (i, row) in g[r * n * n..(r + 1) * n * n].chunks_exact(n).enumerate() {
            let mut s = 0.0;
            for (c, &v) in cs.iter_mut().zip(row) {
                *c += v;
                s += v;
            }
            rs[i] = s;
        }
        tot[0] = rs.iter().sum();
    });
    out
}

pub(crate) fn map(x: &[f64], f: impl Fn(f64) -> f64 + Sync + Send) -> Vec<f64> {
    pool::build(x.len(), par::CHUNK, |ci, c| {
        let off = ci * par::CHUNK;
        for (v, &y) in c.iter_mut().zip(&x[off..]) {
            v.write(f(y));
        }
    })
}

pub(crate) fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    pool::build(a.len(), par::CHUNK, |ci, c| {
        let off = ci * par::CHUNK;
        for ((v, &x), &y) in c.iter_mut().zip(&a[off..]).zip(&b[off..]) {
            v.write(f(x, y));
        }
    })
}

/// Sum with a fixed blocked order, independent of thread count.
pub(crate) fn sum(x: &[f64]) -> f64 {
    let blocks = x.len().div_ceil(par::CHUNK);
    par::map_indexed(blocks, |b| {
        x[b * par::CHUNK..((b + 1) * par::CHUNK).min(x.len())]
            .iter()
            .sum::<f64>()
    })
    .into_iter()
    .sum()
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

/// Calls `f(big_row_offset, small_offset)` for every row (all axes but the
/// last) of `big`, where `small` broadcasts into `big` along its size-1 axes.
fn for_each_broadcast_row(big: &[usize], small: &[usize], mut f: impl FnMut(usize, usize)) {
    let rank = big.len();
    if rank == 0 {
        f(0, 0);
        return;
    }
    let sstr = strides_of(small);
    let outer = &big[..rank - 1];
    let rows: usize = outer.iter().product();
    let last = big[rank - 1];
    let mut idx = vec![0usize; rank - 1];
    let mut soff = 0usize;
    for r in 0..rows {
        f(r * last, soff);
        // increment the multi-index, keeping the small offset in sync
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            if small[d] != 1 {
                soff += sstr[d];
            }
            if idx[d] < outer[d] {
                break;
            }
            if small[d] != 1 {
                soff -= sstr[d] * outer[d];
            }
            idx[d] = 0;
        }
    }
}

/// Broadcasts `x` (same rank, size-1 axes allowed) up to `shape`.
pub(crate) fn expand(x: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    let total: usize = to.iter().product();
    let mut out = pool::zeros(total);
    if total == 0 {
        return out;
    }
    let rank = to.len();
    let last = if rank == 0 { 1 } else { to[rank - 1] };
    let src_last = if rank == 0 { 1 } else { from[rank - 1] };
    for_each_broadcast_row(to, from, |o, s| {
        let dst = &mut out[o..o + last];
        if src_last == 1 {
            dst.fill(x[s]);
        } else {
            dst.copy_from_slice(&x[s..s + last]);
        }
    });
    out
}

/// Sums `x` of shape `from` down to `to` (same rank, size-1 axes reduced).
pub(crate) fn reduce_to(x: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    let mut out = pool::zeros(to.iter().product());
    if x.is_empty() {
        return out;
    }
    let rank = from.len();
    let last = if rank == 0 { 1 } else { from[rank - 1] };
    let dst_last = if rank == 0 { 1 } else { to[rank - 1] };
    for_each_broadcast_row(from, to, |o, s| {
        let src = &x[o..o + last];
        if dst_last == 1 {
            out[s] += src.iter().sum::<f64>();
        } else {
            for (d, &v) in out[s..s + last].iter_mut().zip(src) {
                *d += v;
            }
        }
    });
    out
}

/// Axis permutation: output axis `d` is input axis `perm[d]`.
pub(crate) fn permute(x: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let in_str = strides_of(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_str: Vec<usize> = perm.iter().map(|&p| in_str[p]).collect();
    let total = x.len();
    let mut out = pool::with_capacity(total);
    if total == 0 {
        return out;
    }
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..total {
        out.push(x[off]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += src_str[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src_str[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    out
}

/// Outer/axis/inner decomposition of a shape around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Copies `len` entries starting at `start` along `axis`.
pub(crate) fn slice_axis(
    x: &[f64],
    shape: &[usize],
    axis: usize,
    start: usize,
    len: usize,
) -> Vec<f64> {
    let (outer, size, inner) = split_axis(shape, axis);
    let mut out = pool::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * size + start) * inner;
        out.extend_from_slice(&x[base..base + len * inner]);
    }
    out
}

/// Embeds `x` into zeros of extent `total` along `axis`, starting at `start`.
pub(crate) fn pad_axis(
    x: &[f64],
    shape: &[usize],
    axis: usize,
    start: usize,
    total: usize,
) -> Vec<f64> {
    let (outer, size, inner) = split_axis(shape, axis);
    let mut out = pool::zeros(outer * total * inner);
    for o in 0..outer {
        let dst = (o * total + start) * inner;
        out[dst..dst + size * inner].copy_from_slice(&x[o * size * inner..(o + 1) * size * inner]);
    }
    out
}

/// `[B,P] -> [B,n,n]`, filling the strict upper triangle row-major and mirroring.
pub(crate) fn triu_to_sym(v: &[f64], batch: usize, n: usize) -> Vec<f64> {
    let p = n * (n - 1) / 2;
    let mut out = pool::zeros(batch * n * n);
    for b in 0..batch {
        let src = &v[b * p..(b + 1) * p];
        let m = &mut out[b * n * n..(b + 1) * n * n];
        let mut q = 0;
        for i in 0..n {
            for j in i + 1..n {
                m[i * n + j] = src[q];
                m[j * n + i] = src[q];
                q += 1;
            }
        }
    }
    out
}

/// Adjoint of [`triu_to_sym`]: `out[p(i,j)] = m[i,j] + m[j,i]`.
pub(crate) fn sym_to_triu(m: &[f64], batch: usize, n: usize) -> Vec<f64> {
    let p = n * (n - 1) / 2;
    let mut out = pool::with_capacity(batch * p);
    for b in 0..batch {
        let mb = &m[b * n * n..(b + 1) * n * n];
        for i in 0..n {
            for j in i + 1..n {
                out.push(mb[i * n + j] + mb[j * n + i]);
            }
        }
    }
    out
}
