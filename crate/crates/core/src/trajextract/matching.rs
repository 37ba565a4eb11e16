use nalgebra::Vector2;

use crate::error::{Error, Result};

/// Minimum-cost assignment of every row to a distinct column
/// (Kuhn-Munkres with potentials). Requires `rows <= cols`; returns the
/// column chosen for each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = cost[0].len();
    if cost.iter().any(|r| r.len() != m) {
        return Err(Error::domain("cost matrix rows have different lengths"));
    }
    if n > m {
        return Err(Error::domain(format!("{n} rows cannot be assigned to {m} columns")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::domain("cost matrix has non-finite entries"));
    }
    // 1-based arrays; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// Pairing of two equally sized point sets minimizing the summed Euclidean
/// distance. Entry `i` is the index in `curr` matched to `prev[i]`.
pub fn match_points(prev: &[Vector2<f64>], curr: &[Vector2<f64>]) -> Result<Vec<usize>> {
    if prev.len() != curr.len() {
        return Err(Error::domain(format!(
            "cannot match {} points to {} points",
            prev.len(),
            curr.len()
        )));
    }
    hungarian(&distance_matrix(prev, curr))
}

pub fn distance_matrix(rows: &[Vector2<f64>], cols: &[Vector2<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|a| cols.iter().map(|b| (a - b).norm()).collect()).collect()
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: &[Vec<f64>], assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}
