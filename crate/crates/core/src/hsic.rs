//! Hilbert–Schmidt independence criterion with a gamma-approximated null.
//!
//! The statistic is the biased V-statistic scaled by the sample size,
//! `testStat = (1/m)·tr(K̃L̃)` with `K̃ = HKH`, `L̃ = HLH`. The threshold is the
//! `(1 − α)` quantile of a gamma distribution matched to the null mean and
//! variance of the statistic (Gretton et al., 2007).

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

use crate::error::{EnciError, Result};
use crate::kernels::{double_center, gaussian_gram, KernelConfig};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// The gamma approximation needs the fourth-order null moments.
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsicResult {
    pub test_stat: f64,
    pub thresh: f64,
    /// `test_stat / thresh`; above 1 means independence is rejected at `alpha`.
    pub ratio: f64,
    pub alpha: f64,
}

impl HsicResult {
    pub fn rejects_independence(&self) -> bool {
        self.test_stat > self.thresh
    }
}

/// Centered Gram matrices of a validated sample pair.
struct CenteredPair {
    k: DMatrix<f64>,
    l: DMatrix<f64>,
    kc: DMatrix<f64>,
    lc: DMatrix<f64>,
}

fn validate(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(EnciError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < MIN_SAMPLES {
        return Err(EnciError::SampleTooSmall {
            min: MIN_SAMPLES,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EnciError::NonFinite);
    }
    let constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
    if constant(x) || constant(y) {
        return Err(EnciError::DegenerateHsicInput);
    }
    Ok(())
}

fn centered_pair(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<CenteredPair> {
    validate(x, y)?;
    let k = gaussian_gram(x, cfg.resolve(x)?)?.into_inner();
    let l = gaussian_gram(y, cfg.resolve(y)?)?.into_inner();
    let kc = double_center(&k);
    let lc = double_center(&l);
    Ok(CenteredPair { k, l, kc, lc })
}

/// `tr(K·H·L·H)` for two square kernel matrices of equal size.
pub fn hsic_trace(k: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    let kc = double_center(k);
    let lc = double_center(l);
    // tr(K̃L̃) = Σ_ij K̃_ij L̃_ji
    kc.iter().zip(lc.transpose().iter()).map(|(a, b)| a * b).sum()
}

pub fn hsic_test(x: &[f64], y: &[f64], cfg: &KernelConfig, alpha: f64) -> Result<HsicResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EnciError::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let pair = centered_pair(x, y, cfg)?;
    let m = x.len() as f64;

    let test_stat = pair.kc.component_mul(&pair.lc).sum() / m;

    // Null variance of the statistic.
    let mut var_sum = 0.0;
    for j in 0..x.len() {
        for i in 0..x.len() {
            if i != j {
                let v = pair.kc[(i, j)] * pair.lc[(i, j)] / 6.0;
                var_sum += v * v;
            }
        }
    }
    let var = var_sum / (m * (m - 1.0)) * 72.0 * (m - 4.0) * (m - 5.0)
        / (m * (m - 1.0) * (m - 2.0) * (m - 3.0));

    // Null mean from the off-diagonal kernel means.
    let off_mean = |g: &DMatrix<f64>| (g.sum() - g.trace()) / (m * (m - 1.0));
    let mu_x = off_mean(&pair.k);
    let mu_y = off_mean(&pair.l);
    let mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / m;

    if !(var > 0.0 && mean > 0.0 && var.is_finite()) {
        return Err(EnciError::DegenerateHsicInput);
    }
    let shape = mean * mean / var;
    let scale = var * m / mean;
    let gamma = Gamma::new(shape, 1.0 / scale).map_err(|_| EnciError::DegenerateHsicInput)?;
    let thresh = gamma_quantile(&gamma, 1.0 - alpha);
    if !(thresh.is_finite() && thresh > 0.0) {
        return Err(EnciError::DegenerateHsicInput);
    }
    let test_stat = test_stat.max(0.0);
    Ok(HsicResult {
        test_stat,
        thresh,
        ratio: test_stat / thresh,
        alpha,
    })
}

/// statrs' quantile search stops near 1e-9 relative error; a few Newton
/// steps on the CDF bring it to rounding level.
fn gamma_quantile(gamma: &Gamma, q: f64) -> f64 {
    let mut t = gamma.inverse_cdf(q);
    for _ in 0..3 {
        let d = gamma.pdf(t);
        if !(d > 0.0 && d.is_finite()) {
            break;
        }
        let next = t - (gamma.cdf(t) - q) / d;
        if !(next.is_finite() && next > 0.0) {
            break;
        }
        t = next;
    }
    t
}

/// `hsic_test` at the default significance level, returning only the ratio.
pub fn hsic_ratio(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    hsic_test(x, y, cfg, DEFAULT_ALPHA).map(|r| r.ratio)
}

/// Outcome of a permutation test on the same statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOutcome {
    pub test_stat: f64,
    /// Empirical `(1 − α)` quantile of the permuted statistics.
    pub thresh: f64,
    pub p_value: f64,
}

impl PermutationOutcome {
    pub fn rejects_independence(&self) -> bool {
        self.test_stat > self.thresh
    }
}

/// Permutation null for `testStat`: `y` is shuffled against fixed `x`.
pub fn hsic_permutation_test<R: Rng>(
    x: &[f64],
    y: &[f64],
    cfg: &KernelConfig,
    alpha: f64,
    permutations: usize,
    rng: &mut R,
) -> Result<PermutationOutcome> {
    if permutations == 0 {
        return Err(EnciError::InvalidConfig("need at least one permutation".into()));
    }
    let pair = centered_pair(x, y, cfg)?;
    let m = x.len();
    let stat_for = |perm: &[usize]| {
        let mut s = 0.0;
        for (j, &pj) in perm.iter().enumerate() {
            for (i, &pi) in perm.iter().enumerate() {
                s += pair.kc[(i, j)] * pair.lc[(pi, pj)];
            }
        }
        s / m as f64
    };
    let identity: Vec<usize> = (0..m).collect();
    let test_stat = stat_for(&identity);
    let mut perm = identity;
    let mut null: Vec<f64> = (0..permutations)
        .map(|_| {
            perm.shuffle(rng);
            stat_for(&perm)
        })
        .collect();
    null.sort_by(f64::total_cmp);
    let idx = (((1.0 - alpha) * permutations as f64).ceil() as usize).clamp(1, permutations) - 1;
    let exceed = null.iter().filter(|&&s| s >= test_stat).count();
    Ok(PermutationOutcome {
        test_stat,
        thresh: null[idx],
        p_value: (exceed + 1) as f64 / (permutations + 1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn constant_input_rejected() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y = vec![3.0; 20];
        let err = hsic_test(&x, &y, &KernelConfig::default(), 0.05).unwrap_err();
        assert_eq!(err.to_string(), "degenerate input to independence test");
        assert!(hsic_test(&y, &x, &KernelConfig::default(), 0.05).is_err());
    }

    #[test]
    fn small_sample_rejected() {
        let x: Vec<f64> = (0..7).map(f64::from).collect();
        let err = hsic_test(&x, &x, &KernelConfig::default(), 0.05).unwrap_err();
        assert!(matches!(err, EnciError::SampleTooSmall { min: 8, got: 7 }));
    }

    #[test]
    fn bad_alpha_rejected() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(hsic_test(&x, &x, &KernelConfig::default(), 1.0).is_err());
        assert!(hsic_test(&x, &x, &KernelConfig::default(), 0.0).is_err());
    }

    #[test]
    fn ratio_is_stat_over_thresh() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = uniform(&mut rng, 50);
        let y = uniform(&mut rng, 50);
        let r = hsic_test(&x, &y, &KernelConfig::default(), 0.05).unwrap();
        assert_eq!(r.ratio, r.test_stat / r.thresh);
        assert!(r.test_stat >= 0.0);
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = uniform(&mut rng, 60);
        let y: Vec<f64> = x.iter().map(|v| v * v + 0.1 * rng.random::<f64>()).collect();
        let cfg = KernelConfig::default();
        assert_abs_diff_eq!(
            hsic_ratio(&x, &y, &cfg).unwrap(),
            hsic_ratio(&y, &x, &cfg).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn dependent_pair_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = uniform(&mut rng, 200);
        let y: Vec<f64> = x
            .iter()
            .map(|v| v.powi(3) + 0.01 * (rng.random::<f64>() - 0.5))
            .collect();
        assert!(hsic_ratio(&x, &y, &KernelConfig::default()).unwrap() > 1.0);
    }

    #[test]
    fn permutation_test_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = uniform(&mut rng, 30);
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let out = hsic_permutation_test(&x, &y, &KernelConfig::default(), 0.05, 200, &mut rng)
            .unwrap();
        assert!(out.rejects_independence());
        assert!(out.p_value < 0.01);
    }
}
