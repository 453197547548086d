//! ICA-LiNGAM on τ-profiles, followed by tree / multiple-independent-parent
//! post-processing of the coefficient matrix.
//!
//! Coefficient convention: `C[n][m]` is the effect of variable `m` on
//! variable `n`, so an edge `m → n` exists iff `C[n][m] ≠ 0`.

pub mod assignment;
pub mod ica;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::GroupedDataset;
use crate::error::{EnciError, Result};
use crate::graph::Adjacency;
use crate::kernels::KernelConfig;
use crate::trace::{normalize_groups, stack_profiles, tau_profiles};

pub use ica::{fastica, fastica_labeled, IcaConfig};

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.05;

/// Largest size for which the diagonal-maximising row permutation is exact.
const EXACT_ASSIGNMENT_MAX: usize = 12;
/// Largest size for which the causal order is found by exhaustive search.
const EXHAUSTIVE_ORDER_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    /// Row-major `p × p` entries.
    pub entries: Vec<Vec<f64>>,
    /// Estimated causal order, earliest cause first.
    pub variable_order: Vec<usize>,
}

impl CoefficientMatrix {
    pub fn new(entries: &DMatrix<f64>, variable_order: Vec<usize>) -> Self {
        let rows = (0..entries.nrows())
            .map(|i| entries.row(i).iter().copied().collect())
            .collect();
        Self {
            entries: rows,
            variable_order,
        }
    }

    pub fn p(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row][col]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| self.entries[i][j])
    }

    /// Edge `m → n` for every non-zero `C[n][m]`.
    pub fn adjacency(&self) -> Adjacency {
        let p = self.p();
        let mut a = Adjacency::empty(p);
        for n in 0..p {
            for m in 0..p {
                if self.entries[n][m] != 0.0 {
                    a.set(m, n, true);
                }
            }
        }
        a
    }

    /// True if permuting rows and columns by `variable_order` gives a strictly
    /// lower-triangular matrix.
    pub fn is_ordered_lower_triangular(&self) -> bool {
        let mut pos = vec![0; self.p()];
        for (k, &v) in self.variable_order.iter().enumerate() {
            pos[v] = k;
        }
        (0..self.p()).all(|n| (0..self.p()).all(|m| self.entries[n][m] == 0.0 || pos[m] < pos[n]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeVerdict {
    TreeLike,
    MipgLike,
    Ambiguous,
}

impl ShapeVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeVerdict::TreeLike => "tree_like",
            ShapeVerdict::MipgLike => "mipg_like",
            ShapeVerdict::Ambiguous => "ambiguous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEstimate {
    pub adjacency: Adjacency,
    pub coefficients: CoefficientMatrix,
    pub shape_verdict: ShapeVerdict,
    /// Rows / columns with exactly one non-zero entry before adjustment.
    pub n_row: usize,
    pub n_col: usize,
}

/// Unpruned result of one LiNGAM fit, in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct LingamFit {
    /// `B` restricted to the causal order (entries against the order are zero).
    pub b_standardized: DMatrix<f64>,
    /// Standard deviations used to scale each input column.
    pub scales: Vec<f64>,
    pub order: Vec<usize>,
}

impl LingamFit {
    /// Prunes `|B| < threshold` (standardized units) and restores the input scale.
    pub fn coefficients(&self, prune_threshold: f64) -> CoefficientMatrix {
        let p = self.scales.len();
        let c = DMatrix::from_fn(p, p, |n, m| {
            let b = self.b_standardized[(n, m)];
            if b.abs() < prune_threshold {
                0.0
            } else {
                b * self.scales[n] / self.scales[m]
            }
        });
        CoefficientMatrix::new(&c, self.order.clone())
    }
}

/// A LiNGAM estimator.
pub trait LingamBackend {
    fn fit(&self, data: &DMatrix<f64>, seed: u64) -> Result<LingamFit>;
}

/// The ICA-based estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IcaLingam {
    pub ica: IcaConfig,
}

impl LingamBackend for IcaLingam {
    fn fit(&self, data: &DMatrix<f64>, seed: u64) -> Result<LingamFit> {
        let labels: Vec<usize> = (0..data.ncols()).collect();
        self.fit_labeled(data, seed, &labels)
    }
}

impl IcaLingam {
    /// Fit with ICA starting vectors keyed by `labels` (see [`fastica_labeled`]),
    /// which makes the estimate equivariant under column relabeling.
    pub fn fit_labeled(&self, data: &DMatrix<f64>, seed: u64, labels: &[usize]) -> Result<LingamFit> {
        let (standardized, scales) = standardize(data)?;
        let w = fastica_labeled(&standardized, seed, &self.ica, labels)?;
        let b = b_from_unmixing(&w);
        let order = causal_order(&b);
        let mut pos = vec![0; order.len()];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        let p = b.nrows();
        let masked = DMatrix::from_fn(p, p, |n, m| if pos[m] < pos[n] { b[(n, m)] } else { 0.0 });
        Ok(LingamFit {
            b_standardized: masked,
            scales,
            order,
        })
    }
}

fn standardize(data: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = data.nrows() as f64;
    let mut out = data.clone();
    let mut scales = Vec::with_capacity(data.ncols());
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(EnciError::DegenerateComponent(format!(
                "column {j} has no variation"
            )));
        }
        col.apply(|v| *v = (*v - mean) / sd);
        scales.push(sd);
    }
    Ok((out, scales))
}

/// `B = I − W'`, where `W'` is `W` with rows permuted to make the diagonal as
/// large as possible (minimising `Σ 1/|W'_ii|`) and rescaled to unit diagonal.
pub fn b_from_unmixing(w: &DMatrix<f64>) -> DMatrix<f64> {
    let p = w.nrows();
    let cost = w.map(|v| (1.0 / v.abs()).min(1e15));
    let col_of_row = if p <= EXACT_ASSIGNMENT_MAX {
        assignment::hungarian(&cost)
    } else {
        assignment::greedy(&cost)
    };
    let mut permuted = DMatrix::zeros(p, p);
    for (i, &j) in col_of_row.iter().enumerate() {
        permuted.set_row(j, &w.row(i));
    }
    for j in 0..p {
        let d = permuted[(j, j)];
        permuted.row_mut(j).scale_mut(1.0 / d);
    }
    DMatrix::identity(p, p) - permuted
}

/// Order minimising the squared mass of `B` that points against it.
pub fn causal_order(b: &DMatrix<f64>) -> Vec<usize> {
    if b.nrows() <= EXHAUSTIVE_ORDER_MAX {
        exhaustive_order(b)
    } else {
        elimination_order(b)
    }
}

/// Sum of `B[o_a][o_b]²` over `a < b`: effects of later variables on earlier ones.
pub fn upper_triangular_mass(b: &DMatrix<f64>, order: &[usize]) -> f64 {
    let mut s = 0.0;
    for a in 0..order.len() {
        for c in a + 1..order.len() {
            s += b[(order[a], order[c])].powi(2);
        }
    }
    s
}

fn exhaustive_order(b: &DMatrix<f64>) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..b.nrows()).collect();
    let mut best = perm.clone();
    let mut best_mass = upper_triangular_mass(b, &perm);
    while next_permutation(&mut perm) {
        let mass = upper_triangular_mass(b, &perm);
        if mass < best_mass {
            best_mass = mass;
            best.clone_from(&perm);
        }
    }
    best
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Zeroes the smallest entries of `|B|` (starting with the `p(p+1)/2`
/// smallest) until the remaining pattern admits an order in which every
/// variable only depends on earlier ones.
fn elimination_order(b: &DMatrix<f64>) -> Vec<usize> {
    let p = b.nrows();
    let mut cells: Vec<(usize, usize)> = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).collect();
    cells.sort_by(|x, y| b[*x].abs().total_cmp(&b[*y].abs()).then(x.cmp(y)));
    let mut zeroed = DMatrix::from_element(p, p, false);
    let start = p * (p + 1) / 2;
    for &c in &cells[..start] {
        zeroed[c] = true;
    }
    for &c in &cells[start..] {
        if let Some(order) = peel_order(&zeroed) {
            return order;
        }
        zeroed[c] = true;
    }
    // Everything zeroed: any order is consistent.
    peel_order(&zeroed).unwrap_or_else(|| (0..p).collect())
}

/// Repeatedly removes a variable whose row (among the remaining variables) is
/// entirely zero; such a variable has no remaining causes.
fn peel_order(zeroed: &DMatrix<bool>) -> Option<Vec<usize>> {
    let p = zeroed.nrows();
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut order = Vec::with_capacity(p);
    while !remaining.is_empty() {
        let k = remaining
            .iter()
            .position(|&r| remaining.iter().all(|&c| c == r || zeroed[(r, c)]))?;
        order.push(remaining.remove(k));
    }
    Some(order)
}

/// Full ICA-LiNGAM: fit, order, prune.
pub fn ica_lingam(tau: &DMatrix<f64>, seed: u64, prune_threshold: f64) -> Result<CoefficientMatrix> {
    IcaLingam::default()
        .fit(tau, seed)
        .map(|fit| fit.coefficients(prune_threshold))
}

/// Counts rows and columns holding exactly one non-zero entry.
pub fn shape_counts(c: &CoefficientMatrix) -> (usize, usize) {
    let p = c.p();
    let n_row = (0..p)
        .filter(|&i| (0..p).filter(|&j| c.entries[i][j] != 0.0).count() == 1)
        .count();
    let n_col = (0..p)
        .filter(|&j| (0..p).filter(|&i| c.entries[i][j] != 0.0).count() == 1)
        .count();
    (n_row, n_col)
}

/// Adjusts a pruned coefficient matrix towards a tree (≤ 1 parent per node)
/// or a multiple-independent-parent graph (≤ 1 child per node), whichever the
/// matrix resembles more. Offending rows (columns) keep only the entry of
/// largest magnitude.
pub fn enforce_graph_shape(c: &CoefficientMatrix) -> GraphEstimate {
    let (n_row, n_col) = shape_counts(c);
    let p = c.p();
    let mut entries = c.entries.clone();
    let verdict = if n_row > n_col {
        for row in entries.iter_mut() {
            keep_largest(row.iter_mut());
        }
        ShapeVerdict::TreeLike
    } else if n_col > n_row {
        for j in 0..p {
            keep_largest(entries.iter_mut().map(|row| &mut row[j]));
        }
        ShapeVerdict::MipgLike
    } else {
        ShapeVerdict::Ambiguous
    };
    let coefficients = CoefficientMatrix {
        entries,
        variable_order: c.variable_order.clone(),
    };
    GraphEstimate {
        adjacency: coefficients.adjacency(),
        coefficients,
        shape_verdict: verdict,
        n_row,
        n_col,
    }
}

fn keep_largest<'a>(line: impl Iterator<Item = &'a mut f64>) {
    let mut cells: Vec<&mut f64> = line.collect();
    let Some(best) = (0..cells.len())
        .filter(|&k| *cells[k] != 0.0)
        .max_by(|&a, &b| cells[a].abs().total_cmp(&cells[b].abs()).then(b.cmp(&a)))
    else {
        return;
    };
    for (k, v) in cells.iter_mut().enumerate() {
        if k != best {
            **v = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub kernel: KernelConfig,
    pub prune_threshold: f64,
    pub seed: u64,
    pub ica: IcaConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::default(),
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            seed: 0,
            ica: IcaConfig::default(),
        }
    }
}

/// `N × p` matrix of τ-profiles (normalized groups, one column per variable).
pub fn tau_matrix(data: &GroupedDataset, kernel: &KernelConfig) -> Result<DMatrix<f64>> {
    let normalized = normalize_groups(data);
    stack_profiles(&tau_profiles(&normalized, kernel)?)
}

/// Graph inference at several pruning thresholds, sharing one τ/ICA pass.
pub fn infer_graph_sweep(
    data: &GroupedDataset,
    cfg: &GraphConfig,
    prune_thresholds: &[f64],
) -> Result<Vec<GraphEstimate>> {
    if data.n_vars() < 2 {
        return Err(EnciError::InvalidDataset(
            "graph inference needs at least 2 variables".into(),
        ));
    }
    let tau = tau_matrix(data, &cfg.kernel)?;
    let fit = IcaLingam { ica: cfg.ica }.fit(&tau, cfg.seed)?;
    Ok(prune_thresholds
        .iter()
        .map(|&t| enforce_graph_shape(&fit.coefficients(t)))
        .collect())
}

pub fn infer_graph(data: &GroupedDataset, cfg: &GraphConfig) -> Result<GraphEstimate> {
    infer_graph_sweep(data, cfg, &[cfg.prune_threshold]).map(|mut v| v.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[f64]]) -> CoefficientMatrix {
        CoefficientMatrix {
            entries: rows.iter().map(|r| r.to_vec()).collect(),
            variable_order: (0..rows.len()).collect(),
        }
    }

    #[test]
    fn chain_is_ambiguous_and_unchanged() {
        let c = cm(&[&[0.0, 0.0, 0.0], &[5.0, 0.0, 0.0], &[0.0, 3.0, 0.0]]);
        let g = enforce_graph_shape(&c);
        assert_eq!((g.n_row, g.n_col), (2, 2));
        assert_eq!(g.shape_verdict, ShapeVerdict::Ambiguous);
        assert_eq!(g.coefficients.entries, c.entries);
    }

    #[test]
    fn equal_counts_unchanged() {
        let c = cm(&[&[0.0, 0.0, 0.0], &[4.0, 0.0, 0.0], &[2.0, 3.0, 0.0]]);
        let g = enforce_graph_shape(&c);
        assert_eq!((g.n_row, g.n_col), (1, 1));
        assert_eq!(g.coefficients.entries, c.entries);
    }

    #[test]
    fn tree_adjustment_keeps_largest() {
        let c = cm(&[
            &[0.0, 0.0, 0.0, 0.0],
            &[4.0, 0.0, 0.0, 0.0],
            &[0.0, 3.0, 0.0, 0.0],
            &[1.0, 2.0, 0.0, 0.0],
        ]);
        let g = enforce_graph_shape(&c);
        assert_eq!((g.n_row, g.n_col), (2, 0));
        assert_eq!(g.shape_verdict, ShapeVerdict::TreeLike);
        assert_eq!(g.coefficients.entries[3], vec![0.0, 2.0, 0.0, 0.0]);
        assert!(g.adjacency.has_edge(1, 3));
        assert!(!g.adjacency.has_edge(0, 3));
    }

    #[test]
    fn column_adjustment_keeps_largest_magnitude() {
        // Node 0 has two children (1 and 2); nodes 1 and 2 each feed node 3.
        // Rows with one entry: 1, 2 -> 2. Columns with one entry: 1, 2 -> 2.
        let c = cm(&[
            &[0.0, 0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[-3.0, 0.0, 0.0, 0.0],
            &[0.0, 0.5, 0.7, 0.0],
        ]);
        assert_eq!(enforce_graph_shape(&c).shape_verdict, ShapeVerdict::Ambiguous);

        // Parents 0 and 1 of node 2, one child each: n_row = 0, n_col = 2.
        let c = cm(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[-3.0, 1.0, 0.0]]);
        let g = enforce_graph_shape(&c);
        assert_eq!((g.n_row, g.n_col), (0, 2));
        assert_eq!(g.shape_verdict, ShapeVerdict::MipgLike);
        assert_eq!(g.coefficients.entries, c.entries);

        // Node 0 feeds 1 (2.0) and 3 (-0.4); 1 and 2 each feed 3 once more.
        // Rows: only row 1 has one entry -> 1. Columns: 1 and 2 -> 2.
        let c = cm(&[
            &[0.0, 0.0, 0.0, 0.0],
            &[2.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[-0.4, 0.5, 0.7, 0.0],
        ]);
        let g = enforce_graph_shape(&c);
        assert_eq!((g.n_row, g.n_col), (1, 2));
        assert_eq!(g.shape_verdict, ShapeVerdict::MipgLike);
        assert_eq!(g.coefficients.entries[1][0], 2.0);
        assert_eq!(g.coefficients.entries[3][0], 0.0);
        assert_eq!(g.coefficients.entries[3][1], 0.5);
    }

    #[test]
    fn negative_entries_compared_by_magnitude() {
        let c = cm(&[
            &[0.0, 0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.5, -2.0, 0.0, 0.0],
        ]);
        let g = enforce_graph_shape(&c);
        assert_eq!(g.shape_verdict, ShapeVerdict::TreeLike);
        assert_eq!(g.coefficients.entries[3], vec![0.0, -2.0, 0.0, 0.0]);
    }

    #[test]
    fn next_permutation_enumerates_all() {
        let mut v = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut v) {
            count += 1;
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn exhaustive_and_elimination_agree_on_exact_dag() {
        // 0 -> 2 -> 1 -> 3
        let mut b = DMatrix::zeros(4, 4);
        b[(2, 0)] = 0.8;
        b[(1, 2)] = -1.1;
        b[(3, 1)] = 0.6;
        b[(3, 0)] = 0.3;
        assert_eq!(exhaustive_order(&b), vec![0, 2, 1, 3]);
        assert_eq!(elimination_order(&b), vec![0, 2, 1, 3]);
    }

    #[test]
    fn b_from_permuted_unmixing() {
        // W for x2 = 2 x1 + e2: rows (1, 0) and (-2, 1), given in swapped order and scaled.
        let w = DMatrix::from_row_slice(2, 2, &[4.0, -2.0, 3.0, 0.0]);
        let b = b_from_unmixing(&w);
        assert!((b[(1, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(b[(0, 1)], 0.0);
        assert_eq!(b[(0, 0)], 0.0);
    }
}
