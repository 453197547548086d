//! Grouped observations: the unit of inference.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{EnciError, Result};

/// `N` groups of aligned observations over `p` named variables.
///
/// Each group is an `n_i × p` matrix (rows are samples). Every group shares the
/// same column set, and all entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    variables: Vec<String>,
    groups: Vec<DMatrix<f64>>,
    /// Free-form metadata: seed, generator settings, source file.
    pub provenance: BTreeMap<String, String>,
}

impl GroupedDataset {
    pub fn new(variables: Vec<String>, groups: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = variables.len();
        if p == 0 {
            return Err(EnciError::InvalidDataset("no variables".into()));
        }
        if groups.len() < 2 {
            return Err(EnciError::InvalidDataset(format!(
                "need at least 2 groups, got {}",
                groups.len()
            )));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.ncols() != p {
                return Err(EnciError::InvalidDataset(format!(
                    "group {i} has {} columns, expected {p}",
                    g.ncols()
                )));
            }
            if g.nrows() < 2 {
                return Err(EnciError::GroupTooSmall {
                    group: i,
                    rows: g.nrows(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(EnciError::NonFinite);
            }
        }
        let mut seen = std::collections::HashSet::new();
        for v in &variables {
            if !seen.insert(v.as_str()) {
                return Err(EnciError::InvalidDataset(format!(
                    "duplicate variable name `{v}`"
                )));
            }
        }
        Ok(Self {
            variables,
            groups,
            provenance: BTreeMap::new(),
        })
    }

    /// Builds a dataset with variables named `x1..xp`.
    pub fn with_default_names(groups: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = groups.first().map_or(0, |g| g.ncols());
        Self::new(default_names(p), groups)
    }

    pub fn with_provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.insert(key.to_string(), value.to_string());
        self
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn groups(&self) -> &[DMatrix<f64>] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn total_rows(&self) -> usize {
        self.groups.iter().map(|g| g.nrows()).sum()
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| EnciError::UnknownVariable(name.to_string()))
    }

    /// The samples of one variable in one group.
    pub fn column(&self, group: usize, var: usize) -> Vec<f64> {
        self.groups[group].column(var).iter().copied().collect()
    }

    /// Reorders (or selects) columns. `order[k]` is the source column of new column `k`.
    pub fn select_columns(&self, order: &[usize]) -> Result<Self> {
        for &c in order {
            if c >= self.n_vars() {
                return Err(EnciError::DimensionMismatch {
                    expected: self.n_vars(),
                    got: c,
                });
            }
        }
        let variables = order.iter().map(|&c| self.variables[c].clone()).collect();
        let groups = self
            .groups
            .iter()
            .map(|g| g.select_columns(order.iter()))
            .collect();
        let mut out = Self::new(variables, groups)?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    /// Reorders groups. `order[k]` is the source group of new group `k`.
    pub fn permute_groups(&self, order: &[usize]) -> Self {
        Self {
            variables: self.variables.clone(),
            groups: order.iter().map(|&i| self.groups[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        variables: Vec<String>,
        groups: Vec<DMatrix<f64>>,
        provenance: BTreeMap<String, String>,
    ) -> Self {
        Self {
            variables,
            groups,
            provenance,
        }
    }
}

pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |i, j| (i * cols + j) as f64)
    }

    #[test]
    fn rejects_single_group() {
        let err = GroupedDataset::with_default_names(vec![group(3, 2)]).unwrap_err();
        assert!(matches!(err, EnciError::InvalidDataset(_)));
    }

    #[test]
    fn rejects_small_group() {
        let err = GroupedDataset::with_default_names(vec![group(3, 2), group(1, 2)]).unwrap_err();
        assert!(matches!(err, EnciError::GroupTooSmall { group: 1, rows: 1 }));
    }

    #[test]
    fn rejects_ragged_columns() {
        let err = GroupedDataset::with_default_names(vec![group(3, 2), group(3, 3)]).unwrap_err();
        assert!(matches!(err, EnciError::InvalidDataset(_)));
    }

    #[test]
    fn rejects_non_finite() {
        let mut g = group(3, 2);
        g[(1, 1)] = f64::NAN;
        let err = GroupedDataset::with_default_names(vec![group(3, 2), g]).unwrap_err();
        assert!(matches!(err, EnciError::NonFinite));
    }

    #[test]
    fn select_columns_swaps() {
        let ds = GroupedDataset::with_default_names(vec![group(3, 2), group(4, 2)]).unwrap();
        let swapped = ds.select_columns(&[1, 0]).unwrap();
        assert_eq!(swapped.variables(), &["x2".to_string(), "x1".to_string()]);
        assert_eq!(swapped.column(1, 0), ds.column(1, 1));
    }
}
