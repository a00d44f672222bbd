//! Latin hypercube sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draws `n` points in the box `bounds`, one per stratum per dimension.
///
/// Each dimension is cut into `n` equal strata; a random permutation assigns
/// strata to samples and the point is placed uniformly inside its stratum.
///
/// ```
/// use aeroman::design::lhs::latin_hypercube;
///
/// let pts = latin_hypercube(4, &[(0.0, 1.0), (-2.0, 2.0)], 7);
/// let mut strata: Vec<usize> = pts.iter().map(|p| (p[0] * 4.0) as usize).collect();
/// strata.sort();
/// assert_eq!(strata, vec![0, 1, 2, 3]);
/// ```
pub fn latin_hypercube(n: usize, bounds: &[(f64, f64)], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; bounds.len()]; n];
    let mut order: Vec<usize> = (0..n).collect();
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        order.shuffle(&mut rng);
        let width = (hi - lo) / n as f64;
        for (point, &stratum) in points.iter_mut().zip(&order) {
            point[d] = lo + width * (stratum as f64 + rng.random::<f64>());
        }
    }
    points
}

/// Index of the stratum of `value` when `[lo, hi]` is cut into `n` pieces.
pub fn stratum(value: f64, lo: f64, hi: f64, n: usize) -> usize {
    let k = ((value - lo) / (hi - lo) * n as f64).floor();
    (k.max(0.0) as usize).min(n - 1)
}
