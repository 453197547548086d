//! Per-group normalized-trace statistics of the tensor mean embedding.
//!
//! For group `i` with Gram matrix `K⁽ⁱ⁾` of one variable, the group statistic is
//! `s_i = (1/n_i²)·tr(K⁽ⁱ⁾H)`. The profile value is its deviation from the
//! across-group mean, `τ⁽ⁱ⁾ = s_i − (1/N)·Σ_j s_j`. Across groups these values
//! behave like observations of a linear model in the cause's profile.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dataset::GroupedDataset;
use crate::error::{EnciError, Result};
use crate::kernels::{gaussian_gram, GramMatrix, KernelConfig};

/// Per-group deviations of one variable's trace statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct TauProfile {
    pub variable: String,
    pub values: Vec<f64>,
}

impl TauProfile {
    pub fn new(variable: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            variable: variable.into(),
            values,
        }
    }

    /// Builds a profile from raw values by subtracting their mean.
    pub fn centered(variable: impl Into<String>, raw: &[f64]) -> Self {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        Self::new(variable, raw.iter().map(|s| s - mean).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Z-scores every variable within every group (population standard deviation).
/// Constant columns become all zeros.
pub fn normalize_groups(data: &GroupedDataset) -> GroupedDataset {
    let groups = data.groups().iter().map(standardize_columns).collect();
    GroupedDataset::from_parts_unchecked(
        data.variables().to_vec(),
        groups,
        data.provenance.clone(),
    )
}

fn standardize_columns(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows() as f64;
    let mut out = g.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 0.0 {
            col.apply(|v| *v = (*v - mean) / sd);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// `(1/n²)·tr(K·H)`, computed as `(1/n²)·(tr K − (1/n)·1ᵀK1)`.
pub fn group_trace_stat(k: &GramMatrix) -> f64 {
    let m = k.matrix();
    let n = m.nrows() as f64;
    let trace = m.trace();
    let total = m.sum();
    (trace - total / n) / (n * n)
}

/// τ-profile of one variable. The bandwidth is resolved once from the pooled
/// samples of that variable across all groups, so all groups share one kernel.
///
/// `data` is expected to be normalized already (see [`normalize_groups`]).
pub fn tau_profile(data: &GroupedDataset, variable: &str, cfg: &KernelConfig) -> Result<TauProfile> {
    let var = data.variable_index(variable)?;
    tau_profile_at(data, var, cfg)
}

pub fn tau_profile_at(data: &GroupedDataset, var: usize, cfg: &KernelConfig) -> Result<TauProfile> {
    if var >= data.n_vars() {
        return Err(EnciError::DimensionMismatch {
            expected: data.n_vars(),
            got: var,
        });
    }
    let columns: Vec<Vec<f64>> = (0..data.n_groups()).map(|g| data.column(g, var)).collect();
    let pooled: Vec<f64> = columns.iter().flatten().copied().collect();
    let sigma = cfg.resolve(&pooled)?;
    let stats = columns
        .par_iter()
        .map(|col| gaussian_gram(col, sigma).map(|k| group_trace_stat(&k)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(TauProfile::centered(data.variables()[var].clone(), &stats))
}

/// τ-profiles of every variable, in column order.
pub fn tau_profiles(data: &GroupedDataset, cfg: &KernelConfig) -> Result<Vec<TauProfile>> {
    (0..data.n_vars())
        .into_par_iter()
        .map(|v| tau_profile_at(data, v, cfg))
        .collect()
}

/// Stacks profiles into an `N × p` matrix (one column per variable).
pub fn stack_profiles(profiles: &[TauProfile]) -> Result<DMatrix<f64>> {
    let n = profiles.first().map_or(0, TauProfile::len);
    if let Some(bad) = profiles.iter().find(|p| p.len() != n) {
        return Err(EnciError::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, profiles.len(), |i, j| profiles[j].values[i]))
}
