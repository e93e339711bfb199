//! Brute-force linear programming by vertex enumeration.
//!
//! Intended for small, bounded problems (a handful of variables) where an
//! independent, obviously-correct optimum is worth more than speed. Every
//! choice of `n` constraints out of `m` is made tight, the square system is
//! solved, and the best feasible solution wins.

use crate::scalar::Scalar;

/// `maximize objective·x  subject to  rows[k]·x ≤ rhs[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub rows: Vec<Vec<T>>,
    pub rhs: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub value: T,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(objective: Vec<T>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn constrain(&mut self, row: Vec<T>, rhs: T) -> &mut Self {
        debug_assert_eq!(row.len(), self.objective.len());
        self.rows.push(row);
        self.rhs.push(rhs);
        self
    }

    /// `lo ≤ x[var] ≤ hi`
    pub fn bound(&mut self, var: usize, lo: T, hi: T) -> &mut Self {
        let n = self.objective.len();
        let mut up = vec![T::zero(); n];
        up[var] = T::one();
        let mut down = vec![T::zero(); n];
        down[var] = -T::one();
        self.constrain(up, hi);
        self.constrain(down, -lo);
        self
    }

    fn feasible(&self, x: &[T], tol: T) -> bool {
        self.rows.iter().zip(&self.rhs).all(|(row, &b)| {
            let lhs: T = row.iter().zip(x).map(|(&a, &v)| a * v).sum();
            lhs <= b + tol * b.abs().max(T::one())
        })
    }

    /// Optimum over all vertices, or `None` when no vertex is feasible.
    /// The feasible region is assumed bounded.
    pub fn solve_by_vertex_enumeration(&self) -> Option<LpSolution<T>> {
        let n = self.objective.len();
        let m = self.rows.len();
        let tol = T::epsilon().sqrt() * T::lit(1e-2);
        if n == 0 {
            return self.feasible(&[], tol).then(|| LpSolution { x: Vec::new(), value: T::zero() });
        }
        if m < n {
            return None;
        }
        let mut best: Option<LpSolution<T>> = None;
        let mut pick: Vec<usize> = (0..n).collect();
        loop {
            if let Some(x) = solve_square(&pick.iter().map(|&k| (&self.rows[k], self.rhs[k])).collect::<Vec<_>>()) {
                if self.feasible(&x, tol) {
                    let value: T = self.objective.iter().zip(&x).map(|(&c, &v)| c * v).sum();
                    if best.as_ref().is_none_or(|b| value > b.value) {
                        best = Some(LpSolution { x, value });
                    }
                }
            }
            if !next_combination(&mut pick, m) {
                break;
            }
        }
        best
    }
}

/// Advances `pick` to the next n-subset of `0..m` in lexicographic order.
fn next_combination(pick: &mut [usize], m: usize) -> bool {
    let n = pick.len();
    let mut i = n;
    while i > 0 {
        i -= 1;
        if pick[i] < m - n + i {
            pick[i] += 1;
            for j in i + 1..n {
                pick[j] = pick[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_square<T: Scalar>(system: &[(&Vec<T>, T)]) -> Option<Vec<T>> {
    let n = system.len();
    let mut a: Vec<Vec<T>> = system
        .iter()
        .map(|(row, b)| {
            let mut r = (*row).clone();
            r.push(*b);
            r
        })
        .collect();
    let singular = T::epsilon().sqrt() * T::lit(1e-3);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() <= singular {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != T::zero() {
                    for c in col..=n {
                        let v = a[col][c];
                        a[r][c] -= f * v;
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}
