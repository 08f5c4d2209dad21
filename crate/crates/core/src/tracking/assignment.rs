//! Minimum-cost bipartite matching over a gated cost matrix.
//!
//! Infeasible pairs are `None`. The solver first maximizes the number of
//! feasible pairs matched and then minimizes their summed cost. Both goals are
//! handled exactly by running the Hungarian method over lexicographic costs
//! `(penalty, cost)` instead of mixing in a large sentinel value.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
struct LexCost {
    penalty: i64,
    cost: f64,
}

impl LexCost {
    const ZERO: Self = Self {
        penalty: 0,
        cost: 0.0,
    };
    const INF: Self = Self {
        penalty: i64::MAX / 4,
        cost: 0.0,
    };

    fn lt(self, other: Self) -> bool {
        self.cmp_lex(other) == Ordering::Less
    }

    fn cmp_lex(self, other: Self) -> Ordering {
        self.penalty
            .cmp(&other.penalty)
            .then(self.cost.partial_cmp(&other.cost).unwrap_or(Ordering::Equal))
    }
}

impl Add for LexCost {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            penalty: self.penalty + o.penalty,
            cost: self.cost + o.cost,
        }
    }
}

impl Sub for LexCost {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            penalty: self.penalty - o.penalty,
            cost: self.cost - o.cost,
        }
    }
}

/// Rows × columns matrix of optional costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![None; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, cost: Option<f64>) {
        self.data[row * self.cols + col] = cost;
    }

    /// Total cost of a set of pairs. Panics on infeasible pairs.
    pub fn total(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs
            .iter()
            .map(|&(r, c)| self.get(r, c).expect("infeasible pair in matching"))
            .sum()
    }
}

/// Result of matching rows (tracks) to columns (detections).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Solves the gated assignment. Pairs come back sorted by row.
pub fn solve(costs: &CostMatrix) -> Matching {
    let (rows, cols) = (costs.rows, costs.cols);
    let n = rows.max(cols);
    let mut pairs = Vec::new();
    if n > 0 && rows > 0 && cols > 0 {
        let at = |i: usize, j: usize| -> LexCost {
            if i < rows && j < cols {
                if let Some(c) = costs.get(i, j) {
                    return LexCost {
                        penalty: 0,
                        cost: c,
                    };
                }
            }
            LexCost {
                penalty: 1,
                cost: 0.0,
            }
        };
        let row_of_col = hungarian(n, at);
        for (j, &i) in row_of_col.iter().enumerate() {
            if i < rows && j < cols && costs.get(i, j).is_some() {
                pairs.push((i, j));
            }
        }
        pairs.sort_unstable();
    }
    let unmatched_rows = (0..rows)
        .filter(|r| !pairs.iter().any(|p| p.0 == *r))
        .collect();
    let unmatched_cols = (0..cols)
        .filter(|c| !pairs.iter().any(|p| p.1 == *c))
        .collect();
    Matching {
        pairs,
        unmatched_rows,
        unmatched_cols,
    }
}

/// Dense O(n³) Hungarian method with row/column potentials. Returns the row
/// assigned to each column.
fn hungarian(n: usize, cost: impl Fn(usize, usize) -> LexCost) -> Vec<usize> {
    // 1-based with index 0 as the virtual start column.
    let mut u = vec![LexCost::ZERO; n + 1];
    let mut v = vec![LexCost::ZERO; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![LexCost::INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = LexCost::INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur.lt(minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j].lt(delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
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
    (1..=n).map(|j| p[j] - 1).collect()
}
