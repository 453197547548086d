//! Orientation of a cause-effect pair from grouped data.
//!
//! The τ-profiles of cause and effect satisfy `τ_y ≈ c·τ_x + ε` with `ε`
//! non-Gaussian and independent of `τ_x`; the reverse regression has no such
//! independent residual. Both regressions are fitted and their residuals tested
//! against the regressor with HSIC; the direction with the smaller
//! `testStat / thresh` ratio wins.

use serde::{Deserialize, Serialize};

use crate::dataset::GroupedDataset;
use crate::error::{EnciError, Result};
use crate::hsic::{hsic_test, DEFAULT_ALPHA};
use crate::kernels::KernelConfig;
use crate::trace::{normalize_groups, tau_profile_at, TauProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    XtoY,
    YtoX,
    Undecided,
}

impl Direction {
    pub fn from_ratios(r_xy: f64, r_yx: f64) -> Self {
        if r_xy < r_yx {
            Direction::XtoY
        } else if r_xy > r_yx {
            Direction::YtoX
        } else {
            Direction::Undecided
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::XtoY => Direction::YtoX,
            Direction::YtoX => Direction::XtoY,
            Direction::Undecided => Direction::Undecided,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::XtoY => "x->y",
            Direction::YtoX => "y->x",
            Direction::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDecision {
    pub direction: Direction,
    /// HSIC ratio between `τ_x` and the residual of `τ_y` regressed on `τ_x`.
    pub r_xy: f64,
    pub r_yx: f64,
    pub slope_xy: f64,
    pub slope_yx: f64,
}

/// Least-squares fit of one profile on another, with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    /// Kernel for the trace statistics; bandwidth sweeps vary this one.
    pub kernel: KernelConfig,
    /// Kernel for the independence test on (regressor, residual).
    pub hsic_kernel: KernelConfig,
    pub alpha: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::default(),
            hsic_kernel: KernelConfig::default(),
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl PairConfig {
    pub fn with_kernel(kernel: KernelConfig) -> Self {
        Self {
            kernel,
            ..Self::default()
        }
    }
}

/// Regresses `y` on `x` (with intercept).
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<Residuals> {
    if x.len() != y.len() {
        return Err(EnciError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(EnciError::InvalidDataset(format!(
            "regression needs at least 3 groups, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sxx > 1e-24 * nf * scale * scale) {
        return Err(EnciError::NoVariation);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - slope * a - intercept)
        .collect();
    Ok(Residuals {
        slope,
        intercept,
        residuals,
    })
}

/// The decision layer: both regressions, both independence tests, comparison.
pub fn decide_from_profiles(
    tau_x: &TauProfile,
    tau_y: &TauProfile,
    cfg: &PairConfig,
) -> Result<PairDecision> {
    let fit_xy = ols_fit(&tau_x.values, &tau_y.values)?;
    let fit_yx = ols_fit(&tau_y.values, &tau_x.values)?;
    let (h_xy, h_yx) = rayon::join(
        || hsic_test(&tau_x.values, &fit_xy.residuals, &cfg.hsic_kernel, cfg.alpha),
        || hsic_test(&tau_y.values, &fit_yx.residuals, &cfg.hsic_kernel, cfg.alpha),
    );
    let (r_xy, r_yx) = (h_xy?.ratio, h_yx?.ratio);
    Ok(PairDecision {
        direction: Direction::from_ratios(r_xy, r_yx),
        r_xy,
        r_yx,
        slope_xy: fit_xy.slope,
        slope_yx: fit_yx.slope,
    })
}

/// Orients the two variables of `data` (columns 0 and 1).
pub fn infer_pair(data: &GroupedDataset, cfg: &PairConfig) -> Result<PairDecision> {
    if data.n_vars() != 2 {
        return Err(EnciError::DimensionMismatch {
            expected: 2,
            got: data.n_vars(),
        });
    }
    if let Some((i, g)) = data.groups().iter().enumerate().find(|(_, g)| g.nrows() < 2) {
        return Err(EnciError::GroupTooSmall {
            group: i,
            rows: g.nrows(),
        });
    }
    let normalized = normalize_groups(data);
    let (tx, ty) = rayon::join(
        || tau_profile_at(&normalized, 0, &cfg.kernel),
        || tau_profile_at(&normalized, 1, &cfg.kernel),
    );
    decide_from_profiles(&tx?, &ty?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_linear_fit() {
        let x = [-1.0, 0.5, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = ols_fit(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-14);
        for r in fit.residuals {
            assert_abs_diff_eq!(r, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn three_point_fit() {
        let fit = ols_fit(&[-1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fit.intercept, 2.0 / 3.0, epsilon = 1e-15);
        let expected = [1.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0];
        for (r, e) in fit.residuals.iter().zip(expected) {
            assert_abs_diff_eq!(*r, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_groups_rejected() {
        assert!(ols_fit(&[0.0, 1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn constant_regressor_rejected() {
        let err = ols_fit(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err.to_string(), "regressor has no variation across groups");
    }

    #[test]
    fn residuals_orthogonal() {
        let x = [0.3, -1.2, 0.8, 2.2, -0.4];
        let y = [1.0, 0.1, -0.3, 2.5, 0.7];
        let fit = ols_fit(&x, &y).unwrap();
        let dot: f64 = fit.residuals.iter().zip(&x).map(|(r, v)| r * v).sum();
        let sum: f64 = fit.residuals.iter().sum();
        assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn decision_from_ratios() {
        assert_eq!(Direction::from_ratios(0.2, 0.9), Direction::XtoY);
        assert_eq!(Direction::from_ratios(0.9, 0.2), Direction::YtoX);
        assert_eq!(Direction::from_ratios(0.5, 0.5), Direction::Undecided);
        assert_eq!(Direction::Undecided.flipped(), Direction::Undecided);
    }
}
