//! Spatial and spatiotemporal weight matrices: construction, validation,
//! transformation, and the structural analyses (triangularizability,
//! truncation bound) the simulation and likelihood paths depend on.

use sprs::{CsMat, TriMat};

use crate::error::{Result, SparchError};
use crate::linalg;

/// Sparse nonnegative n x n spatial weight matrix with zero diagonal.
///
/// Immutable after construction; every operation returns a new matrix.
#[derive(Debug, Clone)]
pub struct WeightsMatrix {
    mat: CsMat<f64>,
    row_standardized: bool,
    fill_order: std::sync::OnceLock<Vec<usize>>,
}

impl WeightsMatrix {
    /// Validate and wrap a sparse matrix: square, nonnegative entries,
    /// zero main diagonal.
    pub fn new(mat: CsMat<f64>) -> Result<Self> {
        Self::with_flag(mat, false)
    }

    fn with_flag(mat: CsMat<f64>, row_standardized: bool) -> Result<Self> {
        if mat.rows() != mat.cols() {
            return Err(SparchError::InvalidWeights(format!(
                "weight matrix must be square, got {}x{}",
                mat.rows(),
                mat.cols()
            )));
        }
        for (v, (i, j)) in mat.iter() {
            if i == j && *v != 0.0 {
                return Err(SparchError::InvalidWeights(format!(
                    "nonzero diagonal entry at ({}, {}): a location is not influenced by itself",
                    i + 1,
                    j + 1
                )));
            }
            if *v < 0.0 {
                return Err(SparchError::InvalidWeights(format!(
                    "negative weight {} at ({}, {})",
                    v,
                    i + 1,
                    j + 1
                )));
            }
        }
        if row_standardized {
            let m = Self {
                mat,
                row_standardized: false,
                fill_order: Default::default(),
            };
            for (i, sum) in m.row_sums().iter().enumerate() {
                if *sum != 0.0 && (sum - 1.0).abs() > 1e-12 {
                    return Err(SparchError::InvalidWeights(format!(
                        "row {} sums to {} but the matrix is flagged row-standardized",
                        i + 1,
                        sum
                    )));
                }
            }
            return Ok(Self {
                row_standardized: true,
                ..m
            });
        }
        Ok(Self {
            mat,
            row_standardized,
            fill_order: Default::default(),
        })
    }

    pub fn from_triplets(
        n: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        Self::new(linalg::from_triplets(n, n, entries))
    }

    pub fn from_dense(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut t = TriMat::new((n, n));
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "dense rows must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.add_triplet(i, j, v);
                }
            }
        }
        Self::new(t.to_csr())
    }

    pub fn n(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &CsMat<f64> {
        &self.mat
    }

    pub fn is_row_standardized(&self) -> bool {
        self.row_standardized
    }

    pub fn nnz(&self) -> usize {
        self.mat.iter().filter(|(v, _)| **v != 0.0).count()
    }

    /// Fill-reducing column ordering for matrices with the symmetrized
    /// pattern of I + W, such as the likelihood systems diag - rho W',
    /// I + (1/2) rho b W, and I - lambda W. Computed on first use and
    /// cached: the ordering depends only on the sparsity pattern, which
    /// every evaluation on this matrix shares.
    pub fn fill_order(&self) -> &[usize] {
        self.fill_order
            .get_or_init(|| linalg::min_degree_ordering(&self.mat))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n()];
        for (v, (i, _)) in self.mat.iter() {
            sums[i] += *v;
        }
        sums
    }

    /// Divide every nonzero row by its row sum; zero rows pass through.
    pub fn row_standardize(&self) -> WeightsMatrix {
        let sums = self.row_sums();
        let entries: Vec<(usize, usize, f64)> = self
            .mat
            .iter()
            .filter(|(v, _)| **v != 0.0)
            .map(|(v, (i, j))| (i, j, v / sums[i]))
            .collect();
        WeightsMatrix::with_flag(linalg::from_triplets(self.n(), self.n(), entries), true)
            .expect("standardized matrix stays valid")
    }

    /// Keep only entries strictly below the diagonal, turning a contiguity
    /// pattern into an oriented (strictly triangular) one.
    pub fn lower_triangular(&self) -> WeightsMatrix {
        let entries: Vec<(usize, usize, f64)> = self
            .mat
            .iter()
            .filter(|(v, (i, j))| **v != 0.0 && j < i)
            .map(|(v, (i, j))| (i, j, *v))
            .collect();
        WeightsMatrix::from_triplets(self.n(), entries).expect("triangular part stays valid")
    }

    /// Union indicator of neighbor orders 1..max_lag, where an order-k
    /// neighbor is one at shortest contiguity path length k. Diagonal
    /// forced to zero.
    pub fn higher_order_sum(&self, max_lag: usize) -> Result<WeightsMatrix> {
        if max_lag < 1 {
            return Err(SparchError::InvalidArgument(
                "max_lag must be at least 1".into(),
            ));
        }
        let n = self.n();
        let adj: Vec<Vec<usize>> = {
            let mut a = vec![Vec::new(); n];
            for (v, (i, j)) in self.mat.iter() {
                if *v != 0.0 {
                    a[i].push(j);
                }
            }
            a
        };
        let mut entries = Vec::new();
        let mut dist = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        for start in 0..n {
            dist.fill(usize::MAX);
            dist[start] = 0;
            queue.clear();
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                if dist[u] == max_lag {
                    continue;
                }
                for &v in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            for j in 0..n {
                if j != start && dist[j] != usize::MAX && dist[j] <= max_lag {
                    entries.push((start, j, 1.0));
                }
            }
        }
        WeightsMatrix::from_triplets(n, entries)
    }

    /// Acyclicity of the influence graph (edge j -> i for w_ij > 0). When
    /// acyclic, returns a permutation `p` such that ordering locations as
    /// p[0], p[1], ... makes the matrix strictly lower triangular;
    /// equivalently the matrix is nilpotent.
    pub fn strictly_triangularizable(&self) -> Option<Vec<usize>> {
        let n = self.n();
        // deps[i] = columns j with w_ij > 0; i depends on j, so j must
        // precede i in the output ordering.
        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (v, (i, j)) in self.mat.iter() {
            if *v != 0.0 {
                deps[i].push(j);
            }
        }
        for d in deps.iter_mut() {
            d.sort_unstable();
        }
        // Depth-first topological sort, tie-break by ascending index.
        const UNSEEN: u8 = 0;
        const ACTIVE: u8 = 1;
        const DONE: u8 = 2;
        let mut state = vec![UNSEEN; n];
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for root in 0..n {
            if state[root] != UNSEEN {
                continue;
            }
            state[root] = ACTIVE;
            stack.push((root, 0));
            while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
                if *pos < deps[node].len() {
                    let next = deps[node][*pos];
                    *pos += 1;
                    match state[next] {
                        UNSEEN => {
                            state[next] = ACTIVE;
                            stack.push((next, 0));
                        }
                        ACTIVE => return None, // cycle
                        _ => {}
                    }
                } else {
                    state[node] = DONE;
                    order.push(node);
                    stack.pop();
                }
            }
        }
        Some(order)
    }

    /// Truncation half-width `a` for the error support: infinite when
    /// rho = 0 or the matrix is nilpotent, else 1 / (rho^2 ||W||_1)^(1/4)
    /// with the maximum-absolute-column-sum norm.
    pub fn truncation_bound(&self, rho: f64) -> f64 {
        assert!(rho >= 0.0, "rho must be nonnegative");
        if rho == 0.0 || self.strictly_triangularizable().is_some() {
            return f64::INFINITY;
        }
        let mut col_sums = vec![0.0f64; self.n()];
        for (v, (_, j)) in self.mat.iter() {
            col_sums[j] += v.abs();
        }
        let norm = col_sums.iter().cloned().fold(0.0f64, f64::max);
        if norm == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (rho * rho * norm).powf(0.25)
        }
    }
}

/// Regular lattice description for contiguity construction. Cells are
/// numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
    pub scheme: ContiguityScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContiguityScheme {
    /// Shared edge.
    Rook,
    /// Shared edge or corner.
    Queen,
}

/// Binary contiguity matrix of a rows x cols lattice, not row-standardized.
pub fn build_lattice_contiguity(spec: LatticeSpec) -> Result<WeightsMatrix> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(SparchError::InvalidArgument(
            "lattice dimensions must be positive".into(),
        ));
    }
    let (r, c) = (spec.rows as isize, spec.cols as isize);
    let idx = |i: isize, j: isize| (i * c + j) as usize;
    let mut entries = Vec::new();
    for i in 0..r {
        for j in 0..c {
            let offsets: &[(isize, isize)] = match spec.scheme {
                ContiguityScheme::Rook => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
                ContiguityScheme::Queen => &[
                    (-1, -1),
                    (-1, 0),
                    (-1, 1),
                    (0, -1),
                    (0, 1),
                    (1, -1),
                    (1, 0),
                    (1, 1),
                ],
            };
            for &(di, dj) in offsets {
                let (ni, nj) = (i + di, j + dj);
                if ni >= 0 && ni < r && nj >= 0 && nj < c {
                    entries.push((idx(i, j), idx(ni, nj), 1.0));
                }
            }
        }
    }
    WeightsMatrix::from_triplets((r * c) as usize, entries)
}

/// Spatiotemporal weighting over T time slices of N locations each, with
/// per-slice spatial matrices and p temporal lag weights.
#[derive(Debug, Clone)]
pub struct SpatioTemporalSpec {
    pub spatial: Vec<WeightsMatrix>,
    pub temporal_phis: Vec<f64>,
}

/// Block pieces of a spatiotemporal weight operator: the block-diagonal
/// spatial part and one identity-subdiagonal block matrix per temporal lag.
#[derive(Debug, Clone)]
pub struct SpatioTemporalWeights {
    pub spatial_part: WeightsMatrix,
    pub temporal_parts: Vec<WeightsMatrix>,
    pub temporal_phis: Vec<f64>,
}

impl SpatioTemporalWeights {
    /// rho * spatial + sum_k phi_k * temporal_k.
    pub fn combined(&self, rho: f64) -> Result<WeightsMatrix> {
        let n = self.spatial_part.n();
        let mut entries: Vec<(usize, usize, f64)> = self
            .spatial_part
            .matrix()
            .iter()
            .map(|(v, (i, j))| (i, j, rho * v))
            .collect();
        for (part, &phi) in self.temporal_parts.iter().zip(&self.temporal_phis) {
            entries.extend(part.matrix().iter().map(|(v, (i, j))| (i, j, phi * v)));
        }
        WeightsMatrix::from_triplets(n, entries)
    }
}

/// Assemble the NT x NT block structure: spatial matrices on the diagonal,
/// identity blocks on the temporal subdiagonals. Future observations never
/// influence past observations, so all blocks with t_j >= t_i are zero
/// off the spatial diagonal.
pub fn build_spatiotemporal_weights(spec: &SpatioTemporalSpec) -> Result<SpatioTemporalWeights> {
    let t = spec.spatial.len();
    if t == 0 {
        return Err(SparchError::InvalidArgument(
            "at least one time slice is required".into(),
        ));
    }
    let n = spec.spatial[0].n();
    for (k, w) in spec.spatial.iter().enumerate() {
        if w.n() != n {
            return Err(SparchError::DimensionMismatch(format!(
                "spatial matrix for time {} is {}x{}, expected {}x{}",
                k + 1,
                w.n(),
                w.n(),
                n,
                n
            )));
        }
    }
    let p = spec.temporal_phis.len();
    if p >= t {
        return Err(SparchError::InvalidArgument(format!(
            "temporal order p = {p} must be smaller than the number of time points T = {t}"
        )));
    }
    for &phi in &spec.temporal_phis {
        if phi < 0.0 {
            return Err(SparchError::InvalidArgument(
                "temporal lag weights must be nonnegative".into(),
            ));
        }
    }
    let nt = n * t;
    let mut spatial_entries = Vec::new();
    for (block, w) in spec.spatial.iter().enumerate() {
        let off = block * n;
        for (v, (i, j)) in w.matrix().iter() {
            if *v != 0.0 {
                spatial_entries.push((off + i, off + j, *v));
            }
        }
    }
    let spatial_part = WeightsMatrix::from_triplets(nt, spatial_entries)?;
    let mut temporal_parts = Vec::with_capacity(p);
    for k in 1..=p {
        let mut entries = Vec::new();
        for block in k..t {
            let (roff, coff) = (block * n, (block - k) * n);
            for i in 0..n {
                entries.push((roff + i, coff + i, 1.0));
            }
        }
        temporal_parts.push(WeightsMatrix::from_triplets(nt, entries)?);
    }
    Ok(SpatioTemporalWeights {
        spatial_part,
        temporal_parts,
        temporal_phis: spec.temporal_phis.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rook(rows: usize, cols: usize) -> WeightsMatrix {
        build_lattice_contiguity(LatticeSpec {
            rows,
            cols,
            scheme: ContiguityScheme::Rook,
        })
        .unwrap()
    }

    fn queen(rows: usize, cols: usize) -> WeightsMatrix {
        build_lattice_contiguity(LatticeSpec {
            rows,
            cols,
            scheme: ContiguityScheme::Queen,
        })
        .unwrap()
    }

    #[test]
    fn lattice_1x1_has_no_neighbors() {
        let w = rook(1, 1);
        assert_eq!(w.n(), 1);
        assert_eq!(w.nnz(), 0);
    }

    #[test]
    fn lattice_2x2_rook_degrees() {
        let w = rook(2, 2);
        assert_eq!(w.nnz(), 8);
        for s in w.row_sums() {
            assert_eq!(s, 2.0);
        }
    }

    #[test]
    fn lattice_3x3_queen_center_has_eight_neighbors() {
        let w = queen(3, 3);
        assert_eq!(w.row_sums()[4], 8.0);
    }

    #[test]
    fn row_standardize_basics() {
        // Symmetric 2-cycle is already standardized.
        let w = WeightsMatrix::from_dense(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let s = w.row_standardize();
        assert!(s.is_row_standardized());
        assert_eq!(linalg::to_dense(s.matrix()), linalg::to_dense(w.matrix()));

        // 3x3 rook corner cell has two neighbors of weight 0.5 each.
        let s = rook(3, 3).row_standardize();
        for (v, (i, _)) in s.matrix().iter() {
            if i == 0 {
                assert_eq!(*v, 0.5);
            }
        }

        // Zero matrix passes through without dividing by zero.
        let z = WeightsMatrix::from_triplets(3, []).unwrap();
        let sz = z.row_standardize();
        assert_eq!(sz.nnz(), 0);
        assert!(sz.is_row_standardized());
    }

    #[test]
    fn row_standardize_is_idempotent() {
        let w = queen(4, 5).row_standardize();
        let twice = w.row_standardize();
        let (a, b) = (linalg::to_dense(w.matrix()), linalg::to_dense(twice.matrix()));
        assert!((a - b).abs().max() < 1e-15);
    }

    #[test]
    fn invalid_matrices_are_rejected() {
        assert!(WeightsMatrix::from_dense(&[&[1.0, 0.0], &[0.0, 0.0]]).is_err());
        assert!(WeightsMatrix::from_dense(&[&[0.0, -0.5], &[0.0, 0.0]]).is_err());
    }

    #[test]
    fn higher_order_sum_identity_at_lag_one() {
        let w = rook(3, 4);
        let h = w.higher_order_sum(1).unwrap();
        assert_eq!(linalg::to_dense(h.matrix()), linalg::to_dense(w.matrix()));
    }

    #[test]
    fn higher_order_sum_on_path_graph() {
        // 1-2-3 path; lag 2 adds the (1,3) pair.
        let w = WeightsMatrix::from_dense(&[
            &[0.0, 1.0, 0.0],
            &[1.0, 0.0, 1.0],
            &[0.0, 1.0, 0.0],
        ])
        .unwrap();
        let h = w.higher_order_sum(2).unwrap();
        let d = linalg::to_dense(h.matrix());
        assert_eq!(d[(0, 2)], 1.0);
        assert_eq!(d[(2, 0)], 1.0);
        assert_eq!(d[(0, 0)], 0.0);
        assert_eq!(h.nnz(), 6);
    }

    #[test]
    fn higher_order_sum_fixed_point_on_complete_graph() {
        let mut entries = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    entries.push((i, j, 1.0));
                }
            }
        }
        let w = WeightsMatrix::from_triplets(5, entries).unwrap();
        for lag in 1..=4 {
            let h = w.higher_order_sum(lag).unwrap();
            assert_eq!(linalg::to_dense(h.matrix()), linalg::to_dense(w.matrix()));
        }
    }

    #[test]
    fn triangularizable_cases() {
        let lower =
            WeightsMatrix::from_dense(&[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(lower.strictly_triangularizable(), Some(vec![0, 1]));

        let cycle = WeightsMatrix::from_dense(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(cycle.strictly_triangularizable(), None);

        let upper =
            WeightsMatrix::from_dense(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(upper.strictly_triangularizable(), Some(vec![1, 0]));
    }

    #[test]
    fn triangularizable_permutation_triangularizes() {
        let w = queen(4, 4).lower_triangular();
        let p = w.strictly_triangularizable().expect("acyclic");
        // Position of each node in the ordering.
        let mut pos = vec![0usize; w.n()];
        for (k, &node) in p.iter().enumerate() {
            pos[node] = k;
        }
        for (v, (i, j)) in w.matrix().iter() {
            if *v != 0.0 {
                assert!(pos[i] > pos[j], "w_ij > 0 requires j to precede i");
            }
        }
    }

    #[test]
    fn triangularizable_implies_nilpotent() {
        let w = queen(5, 5).lower_triangular();
        assert!(w.strictly_triangularizable().is_some());
        let n = w.n();
        let mut power = w.matrix().clone();
        for _ in 1..n.min(50) {
            if power.iter().all(|(v, _)| *v == 0.0) {
                return;
            }
            power = &power * w.matrix();
        }
        assert!(power.iter().all(|(v, _)| *v == 0.0), "W^n must vanish");
    }

    #[test]
    fn truncation_bound_branches() {
        let w = rook(3, 3);
        assert_eq!(w.truncation_bound(0.0), f64::INFINITY);

        let oriented = w.lower_triangular();
        assert_eq!(oriented.truncation_bound(5.0), f64::INFINITY);
    }

    #[test]
    fn truncation_bound_anchor_20x20() {
        // Row-standardized rook lattice at rho = 1.
        let w = rook(20, 20).row_standardize();
        let a = w.truncation_bound(1.0);
        assert!((a - 0.968).abs() < 0.02, "a = {a}");
    }

    #[test]
    fn truncation_bound_nonincreasing_in_rho() {
        let w = rook(6, 6).row_standardize();
        let mut prev = f64::INFINITY;
        for k in 1..=20 {
            let a = w.truncation_bound(0.1 * k as f64);
            assert!(a <= prev + 1e-12);
            prev = a;
        }
    }

    #[test]
    fn spatiotemporal_single_slice() {
        let w1 = rook(2, 2);
        let st = build_spatiotemporal_weights(&SpatioTemporalSpec {
            spatial: vec![w1.clone()],
            temporal_phis: vec![],
        })
        .unwrap();
        assert!(st.temporal_parts.is_empty());
        assert_eq!(
            linalg::to_dense(st.spatial_part.matrix()),
            linalg::to_dense(w1.matrix())
        );
    }

    #[test]
    fn spatiotemporal_two_slices_hand_assembly() {
        // T = 2, p = 1, N = 2: W blocks on the diagonal, I in the
        // lower-left block of the combined operator.
        let w = WeightsMatrix::from_dense(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let st = build_spatiotemporal_weights(&SpatioTemporalSpec {
            spatial: vec![w.clone(), w],
            temporal_phis: vec![0.5],
        })
        .unwrap();
        let c = st.combined(2.0).unwrap();
        let d = linalg::to_dense(c.matrix());
        let expect = nalgebra::DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 2.0, 0.0, 0.0, //
                2.0, 0.0, 0.0, 0.0, //
                0.5, 0.0, 0.0, 2.0, //
                0.0, 0.5, 2.0, 0.0,
            ],
        );
        assert_eq!(d, expect);
    }

    #[test]
    fn spatiotemporal_causality_zero_pattern() {
        let w = rook(2, 3);
        let st = build_spatiotemporal_weights(&SpatioTemporalSpec {
            spatial: vec![w.clone(), w.clone(), w],
            temporal_phis: vec![0.3, 0.1],
        })
        .unwrap();
        let n = 6;
        let c = st.combined(0.7).unwrap();
        for (v, (i, j)) in c.matrix().iter() {
            let (ti, tj) = (i / n, j / n);
            if *v != 0.0 && ti != tj {
                assert!(tj < ti, "future time block {tj} influences past block {ti}");
            }
        }
        // Dimension mismatch among slices is rejected.
        let bad = build_spatiotemporal_weights(&SpatioTemporalSpec {
            spatial: vec![rook(2, 3), rook(2, 2)],
            temporal_phis: vec![0.3],
        });
        assert!(bad.is_err());
    }
}
