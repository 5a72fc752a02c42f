//! Exact 1-Wasserstein distance between equal-size sets of sampled
//! trajectories.
//!
//! For two uniform empirical distributions with K atoms each, the optimal
//! transport plan is a permutation, so the distance reduces to a
//! minimum-cost perfect matching on the K x K ground-distance matrix. The
//! matching is solved exactly with the shortest-augmenting-path Hungarian
//! method in O(K^3).

use thiserror::Error;

use crate::types::{PredictionSet, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("trajectory length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("set size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("invalid cost matrix: {0}")]
    InvalidMatrix(String),
}

/// Square matrix of non-negative finite matching costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(size: usize, entries: Vec<f64>) -> Result<Self, OtError> {
        if entries.len() != size * size {
            return Err(OtError::InvalidMatrix(format!(
                "{} entries do not form a {size}x{size} matrix",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(OtError::InvalidMatrix(format!("entry {bad} is not a finite non-negative cost")));
        }
        Ok(Self { size, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OtError> {
        let size = rows.len();
        if let Some(row) = rows.iter().find(|r| r.len() != size) {
            return Err(OtError::InvalidMatrix(format!(
                "row of length {} in a matrix with {size} rows",
                row.len()
            )));
        }
        Self::new(size, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.size + col]
    }
}

/// A perfect matching: row `i` is matched to column `perm[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub perm: Vec<usize>,
    pub total_cost: f64,
}

/// Mean per-timestep Euclidean distance between two equal-length trajectories.
pub fn ground_distance(a: &Trajectory, b: &Trajectory) -> Result<f64, OtError> {
    if a.len() != b.len() {
        return Err(OtError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let sum: f64 = a.points().iter().zip(b.points()).map(|(p, q)| p.distance(q)).sum();
    Ok(sum / a.len() as f64)
}

/// Exact minimum-cost perfect matching.
pub fn solve_assignment(costs: &CostMatrix) -> Assignment {
    let n = costs.size();
    if n == 0 {
        return Assignment { perm: Vec::new(), total_cost: 0.0 };
    }

    // 1-based potentials; column 0 is the virtual root of each augmenting tree.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];

        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }

        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    let total_cost = matched_cost(costs, &perm);
    Assignment { perm, total_cost }
}

/// Sum of matched costs, accumulated in ascending order so that the result
/// does not depend on row order.
fn matched_cost(costs: &CostMatrix, perm: &[usize]) -> f64 {
    let mut matched: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| costs.get(i, j)).collect();
    matched.sort_by(f64::total_cmp);
    matched.iter().sum()
}

/// Ground-distance matrix between two sets: `C[i][j] = d(a_i, b_j)`.
pub fn cost_matrix(a: &PredictionSet, b: &PredictionSet) -> Result<CostMatrix, OtError> {
    if a.len() != b.len() {
        return Err(OtError::SizeMismatch { left: a.len(), right: b.len() });
    }
    let mut entries = Vec::with_capacity(a.len() * b.len());
    for ta in a.trajectories() {
        for tb in b.trajectories() {
            entries.push(ground_distance(ta, tb)?);
        }
    }
    CostMatrix::new(a.len(), entries)
}

/// Uniform-weight 1-Wasserstein distance between two K-sample sets.
pub fn wasserstein(a: &PredictionSet, b: &PredictionSet) -> Result<f64, OtError> {
    let costs = cost_matrix(a, b)?;
    Ok(solve_assignment(&costs).total_cost / a.len() as f64)
}
