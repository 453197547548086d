//! Gaussian Gram matrices, median-heuristic bandwidths and centering.
//!
//! The kernel is `k(x, y) = exp(-‖x − y‖² / (2σ²))`. With the median rule the
//! width is `σ = multiplier × d_M`, where `d_M` is the median Euclidean distance
//! over all distinct sample pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EnciError, Result};

/// Multipliers of the median distance used for bandwidth sweeps.
pub const SWEEP_MULTIPLIERS: [f64; 11] = [
    0.1,
    0.2,
    0.25,
    1.0 / 3.0,
    0.5,
    1.0,
    2.0,
    3.0,
    4.0,
    5.0,
    10.0,
];

/// Above this many pairs the scalar median uses the sorted bisection path
/// instead of materialising every distance.
const BRUTE_FORCE_PAIR_LIMIT: usize = 1 << 21;

/// A sample point the kernel can be evaluated on.
pub trait Point {
    fn sq_dist(&self, other: &Self) -> f64;

    fn dist(&self, other: &Self) -> f64 {
        self.sq_dist(other).sqrt()
    }

    fn is_finite(&self) -> bool;

    /// `Some` for one-dimensional points, enabling the sorted median path.
    fn as_scalar(&self) -> Option<f64> {
        None
    }
}

impl Point for f64 {
    fn sq_dist(&self, other: &Self) -> f64 {
        let d = self - other;
        d * d
    }

    fn dist(&self, other: &Self) -> f64 {
        (self - other).abs()
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn as_scalar(&self) -> Option<f64> {
        Some(*self)
    }
}

impl Point for Vec<f64> {
    fn sq_dist(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Median,
    Fixed(f64),
}

/// How the Gaussian kernel width is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth_rule: BandwidthRule,
    /// Scales the resolved bandwidth (median or fixed).
    pub multiplier: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth_rule: BandwidthRule::Median,
            multiplier: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn median(multiplier: f64) -> Self {
        Self {
            bandwidth_rule: BandwidthRule::Median,
            multiplier,
        }
    }

    pub fn fixed(sigma: f64) -> Self {
        Self {
            bandwidth_rule: BandwidthRule::Fixed(sigma),
            multiplier: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.multiplier.is_finite() && self.multiplier > 0.0) {
            return Err(EnciError::InvalidConfig(format!(
                "bandwidth multiplier must be positive, got {}",
                self.multiplier
            )));
        }
        if let BandwidthRule::Fixed(s) = self.bandwidth_rule {
            if !(s.is_finite() && s > 0.0) {
                return Err(EnciError::InvalidConfig(format!(
                    "fixed bandwidth must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Resolves the bandwidth for the given (pooled) samples.
    pub fn resolve<P: Point>(&self, samples: &[P]) -> Result<f64> {
        self.validate()?;
        let base = match self.bandwidth_rule {
            BandwidthRule::Median => median_heuristic(samples)?,
            BandwidthRule::Fixed(s) => s,
        };
        let sigma = base * self.multiplier;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(EnciError::DegenerateSamples);
        }
        Ok(sigma)
    }
}

/// Median of the pairwise distances over distinct index pairs.
pub fn median_heuristic<P: Point>(samples: &[P]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(EnciError::InvalidConfig(format!(
            "median heuristic needs at least 2 samples, got {n}"
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(EnciError::NonFinite);
    }
    let pairs = n * (n - 1) / 2;
    let median = match scalars(samples) {
        Some(xs) if pairs > BRUTE_FORCE_PAIR_LIMIT => sorted_pair_median(xs),
        _ => brute_force_pair_median(samples),
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(EnciError::DegenerateSamples)
    }
}

fn scalars<P: Point>(samples: &[P]) -> Option<Vec<f64>> {
    samples.iter().map(Point::as_scalar).collect()
}

fn brute_force_pair_median<P: Point>(samples: &[P]) -> f64 {
    let n = samples.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(samples[i].dist(&samples[j]));
        }
    }
    let m = d.len();
    let upper = *d.select_nth_unstable_by(m / 2, f64::total_cmp).1;
    if m % 2 == 1 {
        upper
    } else {
        // After selection everything left of m/2 is <= upper.
        let lower = d[..m / 2]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Exact pair-distance median for scalars in `O(n log n + 64 n)`.
fn sorted_pair_median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let m = n * (n - 1) / 2;
    let upper = kth_pair_distance(&xs, m / 2 + 1);
    if m % 2 == 1 {
        upper
    } else {
        0.5 * (kth_pair_distance(&xs, m / 2) + upper)
    }
}

/// Number of pairs `i < j` with `xs[j] − xs[i] <= d` (xs sorted ascending).
fn pairs_within(xs: &[f64], d: f64) -> usize {
    let mut count = 0;
    let mut i = 0;
    for j in 0..xs.len() {
        while xs[j] - xs[i] > d {
            i += 1;
        }
        count += j - i;
    }
    count
}

/// The `k`-th smallest (1-based) pairwise distance. Bisects over the bit
/// patterns of non-negative doubles, which are ordered like the values.
fn kth_pair_distance(xs: &[f64], k: usize) -> f64 {
    let mut lo = 0u64;
    let mut hi = (xs[xs.len() - 1] - xs[0]).to_bits();
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pairs_within(xs, f64::from_bits(mid)) >= k {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    f64::from_bits(lo)
}

/// A Gaussian kernel matrix: symmetric, unit diagonal, entries in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Wraps a matrix without checking the Gaussian-kernel invariants.
    pub fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "Gram matrix must be square");
        Self(m)
    }
}

pub fn gaussian_gram<P: Point>(samples: &[P], sigma: f64) -> Result<GramMatrix> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(EnciError::InvalidConfig(format!(
            "bandwidth must be positive, got {sigma}"
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(EnciError::NonFinite);
    }
    let n = samples.len();
    let denom = 2.0 * sigma * sigma;
    let mut k = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in i + 1..n {
            let v = (-samples[i].sq_dist(&samples[j]) / denom).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramMatrix(k))
}

/// Returns `K·H` with `H = I − (1/n)·11ᵀ`: each row of `K` minus its row mean.
pub fn center_gram(k: &GramMatrix) -> DMatrix<f64> {
    let n = k.n();
    let mut out = k.0.clone();
    for i in 0..n {
        let mean = out.row(i).sum() / n as f64;
        for j in 0..n {
            out[(i, j)] -= mean;
        }
    }
    out
}

/// Returns `H·M·H` for a square matrix: double centering.
pub fn double_center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| m.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn median_two_points() {
        assert_eq!(median_heuristic(&[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn median_three_points() {
        assert_eq!(median_heuristic(&[0.0, 1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn median_even_pair_count() {
        // distances {3,4,10,1,7,6}
        assert_eq!(median_heuristic(&[0.0, 3.0, 4.0, 10.0]).unwrap(), 5.0);
    }

    #[test]
    fn median_identical_samples_is_degenerate() {
        let err = median_heuristic(&[2.0, 2.0, 2.0]).unwrap_err();
        assert!(matches!(err, EnciError::DegenerateSamples));
        assert_eq!(err.to_string(), "degenerate sample set (zero median distance)");
    }

    #[test]
    fn median_mostly_identical_is_degenerate() {
        // Six of the ten distances are zero, and so is the median.
        let err = median_heuristic(&[1.0, 1.0, 1.0, 1.0, 5.0]).unwrap_err();
        assert!(matches!(err, EnciError::DegenerateSamples));
    }

    #[test]
    fn median_vectors() {
        let pts = vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 1.0]];
        // distances 5, 1, sqrt(18)
        assert_abs_diff_eq!(median_heuristic(&pts).unwrap(), 18f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn sorted_path_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 3, 4, 5, 17, 64, 301] {
            let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            // force some ties
            if n > 4 {
                xs[1] = xs[0];
                xs[3] = xs[2] + 0.5;
            }
            assert_eq!(sorted_pair_median(xs.clone()), brute_force_pair_median(&xs), "n = {n}");
        }
    }

    #[test]
    fn gram_single_sample() {
        let k = gaussian_gram(&[3.5], 1.0).unwrap();
        assert_eq!(k.matrix(), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn gram_known_entries() {
        let k = gaussian_gram(&[0.0, 1.0], 1.0).unwrap();
        assert_abs_diff_eq!(k.matrix()[(0, 1)], 0.6065306597126334, epsilon = 1e-15);
        let k = gaussian_gram(&[0.0, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(k.matrix()[(1, 0)], 0.1353352832366127, epsilon = 1e-15);
    }

    #[test]
    fn gram_rejects_non_finite() {
        let err = gaussian_gram(&[0.0, f64::INFINITY], 1.0).unwrap_err();
        assert_eq!(err.to_string(), "non-finite input");
    }

    #[test]
    fn center_one_by_one() {
        let k = GramMatrix::from_matrix_unchecked(DMatrix::from_element(1, 1, 1.0));
        assert_eq!(center_gram(&k)[(0, 0)], 0.0);
    }

    #[test]
    fn center_identity() {
        let k = GramMatrix::from_matrix_unchecked(DMatrix::identity(2, 2));
        let c = center_gram(&k);
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
    }

    #[test]
    fn resolve_rejects_bad_multiplier() {
        assert!(KernelConfig::median(0.0).resolve(&[0.0, 1.0]).is_err());
        assert!(KernelConfig::median(-1.0).resolve(&[0.0, 1.0]).is_err());
        assert!(KernelConfig::fixed(0.0).resolve(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn resolve_accepts_sweep_set() {
        for m in SWEEP_MULTIPLIERS {
            let s = KernelConfig::median(m).resolve(&[0.0, 2.0]).unwrap();
            assert_abs_diff_eq!(s, 2.0 * m, epsilon = 1e-15);
        }
    }
}
