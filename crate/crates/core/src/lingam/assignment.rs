//! Minimum-cost square assignment.

use nalgebra::DMatrix;

/// Exact minimum-cost assignment (Hungarian method with potentials, `O(n³)`).
///
/// Returns `col_of_row`: row `i` is assigned column `col_of_row[i]`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    col_of_row
}

/// Greedy assignment: repeatedly takes the cheapest remaining cell.
pub fn greedy(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let mut cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    cells.sort_by(|a, b| cost[*a].total_cmp(&cost[*b]).then(a.cmp(b)));
    let mut col_of_row = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    for (i, j) in cells {
        if col_of_row[i] == usize::MAX && !col_used[j] {
            col_of_row[i] = j;
            col_used[j] = true;
        }
    }
    col_of_row
}

pub fn assignment_cost(cost: &DMatrix<f64>, col_of_row: &[usize]) -> f64 {
    col_of_row.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}
