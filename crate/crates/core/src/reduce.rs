//! Thread-count independent parallel sums.
//!
//! Neurons are cut into fixed leaves of [`LEAF`] indices; each leaf is summed
//! sequentially and the leaf partials are combined by a fixed-shape pairwise
//! tree. The floating-point summation order therefore depends only on `n`,
//! never on how rayon schedules the leaves.

use rayon::prelude::*;

pub(crate) const LEAF: usize = 512;

/// Sums `width` accumulators over `0..n`. `leaf` adds the contribution of the
/// index range it is handed into the slice (which starts zeroed).
pub(crate) fn tree_sum<F>(n: usize, width: usize, leaf: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync,
{
    if n == 0 {
        return vec![0.0; width];
    }
    let leaves = n.div_ceil(LEAF);
    let mut partials = vec![0.0; leaves * width];
    partials
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(k, acc)| {
            let lo = k * LEAF;
            leaf(lo..(lo + LEAF).min(n), acc);
        });

    let mut count = leaves;
    while count > 1 {
        let half = count.div_ceil(2);
        for k in 0..count / 2 {
            let (dst, src) = (k, k + half);
            for w in 0..width {
                partials[dst * width + w] += partials[src * width + w];
            }
        }
        count = half;
    }
    partials.truncate(width);
    partials
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_plain_sum() {
        let xs: Vec<f64> = (0..5000).map(|k| (k as f64).sin()).collect();
        let s = tree_sum(xs.len(), 2, |r, acc| {
            for j in r {
                acc[0] += xs[j];
                acc[1] += 2.0 * xs[j];
            }
        });
        let plain: f64 = xs.iter().sum();
        assert!((s[0] - plain).abs() < 1e-10);
        assert!((s[1] - 2.0 * plain).abs() < 1e-10);
    }

    #[test]
    fn independent_of_thread_count() {
        let xs: Vec<f64> = (0..100_003).map(|k| ((k * 7919) as f64).cos() * 1e3).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    tree_sum(xs.len(), 1, |r, acc| {
                        for j in r {
                            acc[0] += xs[j];
                        }
                    })[0]
                })
        };
        let one = run(1);
        for t in [2, 3, 8] {
            assert_eq!(one.to_bits(), run(t).to_bits());
        }
    }

    #[test]
    fn empty_range() {
        assert_eq!(tree_sum(0, 3, |_, _| unreachable!()), vec![0.0; 3]);
    }
}
