//! Sparse LU factorization with partial pivoting and a fill-reducing
//! column ordering, plus small dense helpers.
//!
//! Every log-determinant and sparse solve in the likelihood path goes
//! through [`SparseLu`]. A dense route is kept for small systems and as
//! an independent oracle in tests.

use nalgebra::DMatrix;
use sprs::{CsMat, TriMat};

use crate::error::{Result, SparchError};

/// LU factorization of a sparse matrix: `P_r * A[:, q] = L * U` with a
/// unit lower triangular `L`, both stored column-wise in pivot-row space.
pub struct SparseLu {
    n: usize,
    /// Strictly-lower entries of each L column, rows in pivot space (> k).
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Entries of each U column, rows in pivot space (<= k), diagonal last.
    u_cols: Vec<Vec<(usize, f64)>>,
    /// pinv[original_row] = pivot position.
    pinv: Vec<usize>,
    /// Column ordering: column q[k] is eliminated at step k.
    q: Vec<usize>,
}

impl SparseLu {
    /// Factor with a minimum-degree column ordering on the pattern of A + A'.
    pub fn factor(a: &CsMat<f64>) -> Result<Self> {
        let order = min_degree_ordering(a);
        Self::factor_with_order(a, &order)
    }

    pub fn factor_with_order(a: &CsMat<f64>, q: &[usize]) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(SparchError::DimensionMismatch(format!(
                "LU requires a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if q.len() != n {
            return Err(SparchError::DimensionMismatch(
                "column ordering length does not match matrix size".into(),
            ));
        }
        let a = if a.is_csc() {
            a.view()
        } else {
            return Self::factor_with_order(&a.to_csc(), q);
        };

        let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        // Row indices of L columns in *original* row space, for the DFS reach.
        let mut l_rows_orig: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut pinv = vec![usize::MAX; n];

        let mut x = vec![0.0f64; n];
        let mut marked = vec![false; n];
        let mut reach: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for (k, &j) in q.iter().enumerate() {
            // Symbolic: reach of the pattern of A(:, j) through the graph of L.
            reach.clear();
            let col = a.outer_view(j).ok_or_else(|| {
                SparchError::InvalidArgument("column index out of range".into())
            })?;
            for (r, &v) in col.iter() {
                x[r] = v;
                if !marked[r] {
                    // Iterative DFS with explicit position state, postorder
                    // gives a topological order once reversed.
                    stack.push((r, 0));
                    marked[r] = true;
                    while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
                        let kk = pinv[node];
                        let children: &[usize] = if kk == usize::MAX {
                            &[]
                        } else {
                            &l_rows_orig[kk]
                        };
                        if *pos < children.len() {
                            let child = children[*pos];
                            *pos += 1;
                            if !marked[child] {
                                marked[child] = true;
                                stack.push((child, 0));
                            }
                        } else {
                            reach.push(node);
                            stack.pop();
                        }
                    }
                }
            }
            reach.reverse();

            // Numeric: sparse triangular solve x = L \ A(:, j) over the reach.
            for &r in &reach {
                let kk = pinv[r];
                if kk != usize::MAX {
                    let xr = x[r];
                    if xr != 0.0 {
                        for (idx, &lr) in l_rows_orig[kk].iter().enumerate() {
                            x[lr] -= l_cols[kk][idx].1 * xr;
                        }
                    }
                }
            }

            // Partial pivoting over the not-yet-pivotal rows of the reach.
            let mut pivot_row = usize::MAX;
            let mut pivot_abs = 0.0f64;
            for &r in &reach {
                if pinv[r] == usize::MAX && x[r].abs() > pivot_abs {
                    pivot_abs = x[r].abs();
                    pivot_row = r;
                }
            }
            if pivot_row == usize::MAX || pivot_abs == 0.0 {
                for &r in &reach {
                    x[r] = 0.0;
                    marked[r] = false;
                }
                return Err(SparchError::SingularSystem(format!(
                    "zero pivot at elimination step {k}"
                )));
            }
            let pivot_val = x[pivot_row];
            pinv[pivot_row] = k;

            let mut ucol: Vec<(usize, f64)> = Vec::new();
            let mut lcol: Vec<(usize, f64)> = Vec::new();
            let mut lrows: Vec<usize> = Vec::new();
            for &r in &reach {
                let kk = pinv[r];
                if r == pivot_row {
                    continue;
                }
                if kk != usize::MAX {
                    if x[r] != 0.0 {
                        ucol.push((kk, x[r]));
                    }
                } else if x[r] != 0.0 {
                    lcol.push((r, x[r] / pivot_val));
                    lrows.push(r);
                }
                x[r] = 0.0;
                marked[r] = false;
            }
            x[pivot_row] = 0.0;
            marked[pivot_row] = false;
            ucol.push((k, pivot_val));
            l_cols.push(lcol);
            l_rows_orig.push(lrows);
            u_cols.push(ucol);
        }

        // Rewrite L rows into pivot space now that all pivots are known.
        for col in l_cols.iter_mut() {
            for entry in col.iter_mut() {
                entry.0 = pinv[entry.0];
            }
        }

        Ok(SparseLu {
            n,
            l_cols,
            u_cols,
            pinv,
            q: q.to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y = vec![0.0f64; self.n];
        for (orig, &k) in self.pinv.iter().enumerate() {
            y[k] = b[orig];
        }
        // Forward: L z = P_r b (unit diagonal).
        for k in 0..self.n {
            let v = y[k];
            if v != 0.0 {
                for &(i, lv) in &self.l_cols[k] {
                    y[i] -= lv * v;
                }
            }
        }
        // Backward: U w = z.
        for k in (0..self.n).rev() {
            let (last, rest) = self.u_cols[k].split_last().expect("nonempty U column");
            debug_assert_eq!(last.0, k);
            y[k] /= last.1;
            let v = y[k];
            if v != 0.0 {
                for &(i, uv) in rest {
                    y[i] -= uv * v;
                }
            }
        }
        // Undo the column permutation.
        let mut x = vec![0.0f64; self.n];
        for k in 0..self.n {
            x[self.q[k]] = y[k];
        }
        x
    }

    /// Natural log of |det A|.
    pub fn ln_abs_det(&self) -> f64 {
        self.u_cols
            .iter()
            .map(|col| col.last().expect("nonempty U column").1.abs().ln())
            .sum()
    }

    /// Sign of det A (+1.0 or -1.0).
    pub fn det_sign(&self) -> f64 {
        let mut sign = permutation_sign(&self.pinv) * permutation_sign(&self.q);
        for col in &self.u_cols {
            if col.last().expect("nonempty U column").1 < 0.0 {
                sign = -sign;
            }
        }
        sign
    }
}

fn permutation_sign(p: &[usize]) -> f64 {
    let mut seen = vec![false; p.len()];
    let mut sign = 1.0;
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0usize;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = p[i];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// Minimum-degree ordering on the pattern of A + A'. Ties break toward the
/// smallest index so the ordering is deterministic.
pub fn min_degree_ordering(a: &CsMat<f64>) -> Vec<usize> {
    let n = a.rows();
    let mut adj: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); n];
    for (v, (i, j)) in a.iter() {
        if i != j && *v != 0.0 {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let node = (0..n)
            .filter(|&i| !eliminated[i])
            .min_by_key(|&i| (adj[i].len(), i))
            .expect("nodes remain");
        eliminated[node] = true;
        order.push(node);
        let neighbors: Vec<usize> = adj[node].iter().copied().collect();
        for &u in &neighbors {
            adj[u].remove(&node);
        }
        for (a_idx, &u) in neighbors.iter().enumerate() {
            for &v in &neighbors[a_idx + 1..] {
                if !eliminated[u] && !eliminated[v] {
                    adj[u].insert(v);
                    adj[v].insert(u);
                }
            }
        }
    }
    order
}

/// ln|det| and sign via dense LU; oracle route and small-n fallback.
pub fn dense_ln_abs_det(a: &DMatrix<f64>) -> Option<(f64, f64)> {
    let lu = a.clone().lu();
    let det = lu.determinant();
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    // Accumulate in log space to dodge overflow on larger systems.
    let mut ln = 0.0;
    let u = lu.u();
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 {
            return None;
        }
        ln += d.ln();
    }
    Some((ln, det.signum()))
}

/// Convenience: ln|det| with sign, dense below 64 rows, sparse LU above.
pub fn ln_abs_det(a: &CsMat<f64>) -> Result<(f64, f64)> {
    if a.rows() <= 64 {
        let d = to_dense(a);
        dense_ln_abs_det(&d)
            .ok_or_else(|| SparchError::SingularSystem("singular matrix in ln_abs_det".into()))
    } else {
        let lu = SparseLu::factor(a)?;
        Ok((lu.ln_abs_det(), lu.det_sign()))
    }
}

/// Like [`ln_abs_det`], with a caller-supplied column ordering for the
/// sparse route. The ordering depends only on the sparsity pattern, so
/// repeated evaluations on the same pattern can reuse one ordering.
pub fn ln_abs_det_with_order(a: &CsMat<f64>, q: &[usize]) -> Result<(f64, f64)> {
    if a.rows() <= 64 {
        ln_abs_det(a)
    } else {
        let lu = SparseLu::factor_with_order(a, q)?;
        Ok((lu.ln_abs_det(), lu.det_sign()))
    }
}

pub fn to_dense(a: &CsMat<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.rows(), a.cols());
    for (v, (i, j)) in a.iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Sparse matrix from triplets (duplicates summed).
pub fn from_triplets(
    rows: usize,
    cols: usize,
    entries: impl IntoIterator<Item = (usize, usize, f64)>,
) -> CsMat<f64> {
    let mut t = TriMat::new((rows, cols));
    for (i, j, v) in entries {
        t.add_triplet(i, j, v);
    }
    t.to_csr()
}

/// Sparse identity.
pub fn identity(n: usize) -> CsMat<f64> {
    CsMat::eye(n)
}

/// y = A x for CSR/CSC A.
pub fn mat_vec(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0f64; a.rows()];
    for (v, (i, j)) in a.iter() {
        y[i] += v * x[j];
    }
    y
}
