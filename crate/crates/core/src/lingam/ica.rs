//! Deflationary FastICA with the log-cosh contrast.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EnciError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    /// Extra attempts (with a perturbed seed) for a component that fails to converge.
    pub restarts: usize,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iter: 500,
            restarts: 5,
        }
    }
}

/// Symmetric (ZCA) whitening of `data` (rows are samples).
///
/// Returns the whitened rows and the `p × p` whitening matrix `K` such that
/// `z = K·(x − mean)`. ZCA is used because it is unique: it does not depend on
/// eigenvector signs or the ordering of the columns.
pub fn whiten(data: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, p) = data.shape();
    if n < 2 || p == 0 {
        return Err(EnciError::DegenerateComponent(format!(
            "cannot whiten a {n}x{p} matrix"
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EnciError::NonFinite);
    }
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(EnciError::DegenerateComponent(format!(
            "singular covariance (eigenvalues in [{min:.3e}, {max:.3e}])"
        )));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let k = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let z = centered * k.transpose();
    Ok((z, k))
}

/// Estimates the `p × p` unmixing matrix `W` so that the rows of
/// `W·(x − mean)` are maximally non-Gaussian and mutually decorrelated.
pub fn fastica(data: &DMatrix<f64>, seed: u64, cfg: &IcaConfig) -> Result<DMatrix<f64>> {
    let labels: Vec<usize> = (0..data.ncols()).collect();
    fastica_labeled(data, seed, cfg, &labels)
}

/// As [`fastica`], with the random starting vectors keyed by `labels[j]`
/// instead of the column position `j`. Permuting the columns together with
/// their labels permutes the columns of the returned `W` and nothing else.
pub fn fastica_labeled(
    data: &DMatrix<f64>,
    seed: u64,
    cfg: &IcaConfig,
    labels: &[usize],
) -> Result<DMatrix<f64>> {
    check_labels(labels, data.ncols())?;
    let (z, k) = whiten(data)?;
    let (n, p) = z.shape();
    let nf = n as f64;
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(p);

    for c in 0..p {
        let mut last_gap = f64::NAN;
        let mut found = None;
        for attempt in 0..=cfg.restarts {
            let stream = seed
                .wrapping_add((c as u64) << 32)
                .wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let draws: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let init = DVector::from_fn(p, |j, _| draws[labels[j]]);
            let mut w = deflate(init, &rows);
            if w.norm() == 0.0 {
                continue;
            }
            w.normalize_mut();
            for _ in 0..cfg.max_iter {
                let proj = &z * &w;
                let g = proj.map(f64::tanh);
                let g_prime_mean = g.iter().map(|t| 1.0 - t * t).sum::<f64>() / nf;
                let mut next = z.transpose() * &g / nf - &w * g_prime_mean;
                next = deflate(next, &rows);
                let norm = next.norm();
                if !(norm > 0.0 && norm.is_finite()) {
                    break;
                }
                next /= norm;
                last_gap = (next.dot(&w).abs() - 1.0).abs();
                w = next;
                if last_gap < cfg.tolerance {
                    found = Some(w.clone());
                    break;
                }
            }
            if found.is_some() {
                break;
            }
        }
        match found {
            Some(w) => rows.push(w),
            None => {
                return Err(EnciError::NoConvergence(format!(
                    "component {c} of {p} after {} attempts of {} iterations (last gap {last_gap:.3e}, tolerance {:.1e})",
                    cfg.restarts + 1,
                    cfg.max_iter,
                    cfg.tolerance
                )))
            }
        }
    }

    let w_white = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
    Ok(w_white * k)
}

pub(crate) fn check_labels(labels: &[usize], p: usize) -> Result<()> {
    let mut seen = vec![false; p];
    for &l in labels {
        if l >= p || std::mem::replace(&mut seen[l], true) {
            return Err(EnciError::InvalidConfig(format!(
                "column labels must be a permutation of 0..{p}"
            )));
        }
    }
    if labels.len() != p {
        return Err(EnciError::InvalidConfig(format!(
            "expected {p} column labels, got {}",
            labels.len()
        )));
    }
    Ok(())
}

/// Gram–Schmidt step against the already extracted directions.
fn deflate(mut w: DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    for b in basis {
        let proj = w.dot(b);
        w.axpy(-proj, b, 1.0);
    }
    w
}
