//! Replica-parallel accumulation that does not depend on the worker count.
//!
//! Replicas are grouped in fixed blocks. Each block is folded sequentially
//! from a fresh accumulator, blocks run on the pool in any order, and the
//! block results are merged in block order on the calling thread.

use rayon::prelude::*;

use crate::error::{bail, Result};

pub const BLOCK: u64 = 64;

/// Fold `step` over replicas `0..n` on `workers` threads.
pub fn fold_replicas<A, I, S, M>(n: u64, workers: usize, init: I, step: S, mut merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    S: Fn(&mut A, u64) -> Result<()> + Sync,
    M: FnMut(&mut A, A),
{
    let blocks = n.div_ceil(BLOCK);
    let run = || -> Result<Vec<A>> {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = init();
                for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                    step(&mut acc, i)?;
                }
                Ok(acc)
            })
            .collect()
    };
    let parts = if workers == 1 {
        (0..blocks)
            .map(|b| {
                let mut acc = init();
                for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                    step(&mut acc, i)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<A>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build();
        match pool {
            Ok(pool) => pool.install(run)?,
            Err(e) => bail!(Internal, "thread pool: {e}"),
        }
    };
    let mut total = init();
    for part in parts {
        merge(&mut total, part);
    }
    Ok(total)
}

/// Count of successes over replicas; the common case.
pub fn count_replicas<F>(n: u64, workers: usize, f: F) -> Result<u64>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    fold_replicas(
        n,
        workers,
        || 0u64,
        |acc, i| {
            *acc += f(i)? as u64;
            Ok(())
        },
        |a, b| *a += b,
    )
}

/// Per-replica real values summed in a fixed order: returns (Σx, Σx²).
pub fn moments_replicas<F>(n: u64, workers: usize, f: F) -> Result<(f64, f64)>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    fold_replicas(
        n,
        workers,
        || (0.0, 0.0),
        |acc, i| {
            let x = f(i)?;
            acc.0 += x;
            acc.1 += x * x;
            Ok(())
        },
        |a, b| {
            a.0 += b.0;
            a.1 += b.1;
        },
    )
}

/// Vector-valued version of [`moments_replicas`]: sums and sums of squares per coordinate.
pub fn vector_moments<F>(n: u64, workers: usize, dim: usize, f: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    fold_replicas(
        n,
        workers,
        || (vec![0.0; dim], vec![0.0; dim]),
        |acc, i| {
            let x = f(i)?;
            if x.len() != dim {
                bail!(Internal, "replica returned {} values, expected {dim}", x.len());
            }
            for (j, v) in x.into_iter().enumerate() {
                acc.0[j] += v;
                acc.1[j] += v * v;
            }
            Ok(())
        },
        |a, b| {
            for j in 0..dim {
                a.0[j] += b.0[j];
                a.1[j] += b.1[j];
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ReplicaStream;

    #[test]
    fn worker_count_does_not_change_sums() {
        let f = |i: u64| Ok(ReplicaStream::new(5, i).uniform_at(0).ln());
        let a = moments_replicas(1000, 1, f).unwrap();
        let b = moments_replicas(1000, 4, f).unwrap();
        let c = moments_replicas(1000, 3, f).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), c.1.to_bits());
    }

    #[test]
    fn errors_propagate() {
        let r = count_replicas(100, 2, |i| if i == 77 { Err(crate::Error::Internal("x".into())) } else { Ok(true) });
        assert!(r.is_err());
        assert_eq!(count_replicas(130, 2, |_| Ok(true)).unwrap(), 130);
        assert_eq!(count_replicas(0, 2, |_| Ok(true)).unwrap(), 0);
    }
}
