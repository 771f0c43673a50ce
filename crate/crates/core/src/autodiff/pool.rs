//! Process-wide recycling of large `f64` buffers.
//!
//! A training step allocates the same tensor sizes over and over. Returning
//! the buffers of a dropped [`Graph`](super::Graph) to this pool avoids
//! paying the operating system's page-fault cost on every step.

use std::collections::HashMap;
use std::mem::MaybeUninit;
use std::sync::{Mutex, MutexGuard};

use crate::par;

/// Buffers shorter than this are left to the allocator.
const MIN_LEN: usize = 1 << 12;
/// Upper bound on bytes retained by the pool.
const MAX_BYTES: usize = 2 << 30;

#[derive(Default)]
struct Pool {
    free: HashMap<usize, Vec<Vec<f64>>>,
    bytes: usize,
}

static POOL: Mutex<Option<Pool>> = Mutex::new(None);

fn pool() -> MutexGuard<'static, Option<Pool>> {
    POOL.lock().unwrap_or_else(|e| e.into_inner())
}

/// An empty vector with capacity at least `len`.
pub(crate) fn with_capacity(len: usize) -> Vec<f64> {
    if len < MIN_LEN {
        return Vec::with_capacity(len);
    }
    let reused = pool().as_mut().and_then(|p| {
        let v = p.free.get_mut(&len)?.pop()?;
        p.bytes -= len * 8;
        Some(v)
    });
    match reused {
        Some(mut v) => {
            v.clear();
            v
        }
        None => Vec::with_capacity(len),
    }
}

pub(crate) fn zeros(len: usize) -> Vec<f64> {
    let mut v = with_capacity(len);
    v.resize(len, 0.0);
    v
}

pub(crate) fn copy_of(x: &[f64]) -> Vec<f64> {
    let mut v = with_capacity(x.len());
    v.extend_from_slice(x);
    v
}

/// A length-`len` vector whose chunks of `chunk` elements are written by
/// `f(chunk_index, chunk)`, which must initialize every element it receives.
pub(crate) fn build<F>(len: usize, chunk: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [MaybeUninit<f64>]) + Sync + Send,
{
    let mut v = with_capacity(len);
    par::for_each_chunk_mut(&mut v.spare_capacity_mut()[..len], chunk, f);
    // SAFETY: `f` initialized all `len` elements (contract above).
    unsafe { v.set_len(len) };
    v
}

/// Hands a buffer back for reuse.
pub(crate) fn recycle(v: Vec<f64>) {
    let cap = v.capacity();
    if cap < MIN_LEN {
        return;
    }
    let mut guard = pool();
    let p = guard.get_or_insert_with(Pool::default);
    if p.bytes + cap * 8 <= MAX_BYTES {
        p.bytes += cap * 8;
        p.free.entry(cap).or_default().push(v);
    }
}
