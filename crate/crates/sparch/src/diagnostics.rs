//! Moran's I tests, information criteria, and residual plot-data
//! extraction (Moran scatter and normal Q-Q).

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SparchError};
use crate::linalg;
use crate::weights::WeightsMatrix;

/// Tail convention for the Moran z-score p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

impl Default for Alternative {
    fn default() -> Self {
        Alternative::TwoSided
    }
}

impl std::str::FromStr for Alternative {
    type Err = SparchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "two-sided" | "two.sided" | "twosided" => Ok(Alternative::TwoSided),
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            other => Err(SparchError::InvalidArgument(format!(
                "unknown alternative '{other}' (expected two-sided, greater, or less)"
            ))),
        }
    }
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Alternative::TwoSided => "two-sided",
            Alternative::Greater => "greater",
            Alternative::Less => "less",
        };
        f.write_str(s)
    }
}

/// Moran's I with its null moments under the normality assumption.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MoranTest {
    pub i: f64,
    pub null_mean: f64,
    pub null_variance: f64,
    pub z_score: f64,
    pub p_value: f64,
    pub alternative: Alternative,
}

/// Moran's I of `z` against `w` with an asymptotic normal test.
pub fn morans_i(z: &[f64], w: &WeightsMatrix, alternative: Alternative) -> Result<MoranTest> {
    let n = z.len();
    if n < 3 {
        return Err(SparchError::InvalidArgument(format!(
            "Moran's I needs at least 3 observations, got {n}"
        )));
    }
    if n != w.n() {
        return Err(SparchError::DimensionMismatch(format!(
            "{n} observations against a {0} x {0} weight matrix",
            w.n()
        )));
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = z.iter().map(|v| v - mean).collect();
    let ss: f64 = d.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Err(SparchError::DomainError(
            "Moran's I is undefined for a constant vector".into(),
        ));
    }

    let nf = n as f64;
    let mut s0 = 0.0;
    let mut cross = 0.0;
    let mut row_sums = vec![0.0; n];
    let mut col_sums = vec![0.0; n];
    for (v, (i, j)) in w.matrix().iter() {
        s0 += v;
        cross += v * d[i] * d[j];
        row_sums[i] += v;
        col_sums[j] += v;
    }
    if s0 == 0.0 {
        return Err(SparchError::InvalidWeights(
            "weight matrix has no nonzero entries".into(),
        ));
    }
    // S1 = (1/2) sum (w_ij + w_ji)^2 over the union sparsity pattern.
    let wd = linalg::to_dense(w.matrix());
    let mut s1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = wd[(i, j)] + wd[(j, i)];
            if s != 0.0 {
                s1 += s * s;
            }
        }
    }
    s1 *= 0.5;
    let s2: f64 = (0..n)
        .map(|i| {
            let s = row_sums[i] + col_sums[i];
            s * s
        })
        .sum();

    let i_stat = (nf / s0) * cross / ss;
    let null_mean = -1.0 / (nf - 1.0);
    // Expected I^2 under normality (Cliff and Ord moments).
    let e_i2 = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0)
        / ((nf * nf - 1.0) * s0 * s0);
    let null_variance = e_i2 - null_mean * null_mean;
    if null_variance <= 0.0 {
        return Err(SparchError::DomainError(format!(
            "Moran null variance is not positive ({null_variance})"
        )));
    }
    let z_score = (i_stat - null_mean) / null_variance.sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let p_value = match alternative {
        Alternative::TwoSided => 2.0 * normal.cdf(-z_score.abs()),
        Alternative::Greater => 1.0 - normal.cdf(z_score),
        Alternative::Less => normal.cdf(z_score),
    };
    Ok(MoranTest {
        i: i_stat,
        null_mean,
        null_variance,
        z_score,
        p_value,
        alternative,
    })
}

/// AIC = -2 l + 2 k; BIC = -2 l + k ln n.
pub fn information_criteria(loglik: f64, k: usize, n: usize) -> (f64, f64) {
    let kf = k as f64;
    (-2.0 * loglik + 2.0 * kf, -2.0 * loglik + kf * (n as f64).ln())
}

/// Moran scatter points (z_i, (Wz)_i) with the least-squares slope of the
/// centered regression; for row-standardized W the slope equals I.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MoranScatter {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
}

pub fn moran_scatter_data(z: &[f64], w: &WeightsMatrix) -> Result<MoranScatter> {
    if z.len() != w.n() {
        return Err(SparchError::DimensionMismatch(format!(
            "{} observations against a {1} x {1} weight matrix",
            z.len(),
            w.n()
        )));
    }
    let lag = linalg::mat_vec(w.matrix(), z);
    let n = z.len() as f64;
    let zm = z.iter().sum::<f64>() / n;
    let lm = lag.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (zi, li) in z.iter().zip(&lag) {
        num += (zi - zm) * (li - lm);
        den += (zi - zm) * (zi - zm);
    }
    let slope = if den == 0.0 { 0.0 } else { num / den };
    Ok(MoranScatter {
        points: z.iter().copied().zip(lag).collect(),
        slope,
    })
}

/// Normal Q-Q points for standardized values, plus a quartile-based
/// reference line.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QqData {
    /// (theoretical quantile, sample quantile), sorted by the theoretical axis.
    pub points: Vec<(f64, f64)>,
    pub line_intercept: f64,
    pub line_slope: f64,
}

pub fn qq_data(z: &[f64]) -> Result<QqData> {
    let n = z.len();
    if n < 2 {
        return Err(SparchError::InvalidArgument(format!(
            "Q-Q data needs at least 2 observations, got {n}"
        )));
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(SparchError::DomainError(
            "Q-Q data is undefined for a zero-variance sample".into(),
        ));
    }
    let sd = var.sqrt();
    let mut sorted: Vec<f64> = z.iter().map(|v| (v - mean) / sd).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).unwrap();
    let points: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let p = (i as f64 + 0.5) / n as f64;
            (normal.inverse_cdf(p), s)
        })
        .collect();
    // Reference line through the first and third sample quartiles, the
    // qqline convention.
    let sample_q = |p: f64| {
        // R type-7 quantile on the sorted standardized values.
        let h = (n as f64 - 1.0) * p;
        let lo = h.floor() as usize;
        let hi = lo.min(n - 2) + 1;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let (sq1, sq3) = (sample_q(0.25), sample_q(0.75));
    let (tq1, tq3) = (normal.inverse_cdf(0.25), normal.inverse_cdf(0.75));
    let line_slope = if sq3 > sq1 { (sq3 - sq1) / (tq3 - tq1) } else { 1.0 };
    let line_intercept = 0.5 * (sq1 + sq3) - line_slope * 0.5 * (tq1 + tq3);
    Ok(QqData {
        points,
        line_intercept,
        line_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{build_lattice_contiguity, ContiguityScheme, LatticeSpec};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn path_graph(n: usize) -> WeightsMatrix {
        let mut entries = Vec::new();
        for i in 0..n - 1 {
            entries.push((i, i + 1, 1.0));
            entries.push((i + 1, i, 1.0));
        }
        WeightsMatrix::from_triplets(n, entries).unwrap()
    }

    #[test]
    fn hand_summation_n3() {
        // W: 0->1, 1->0, 1->2 with unit weights.
        let w = WeightsMatrix::from_triplets(3, vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0)])
            .unwrap();
        let z = [1.0, 2.0, 4.0];
        let mean = 7.0 / 3.0;
        let d = [1.0 - mean, 2.0 - mean, 4.0 - mean];
        let cross = d[0] * d[1] + d[1] * d[0] + d[1] * d[2];
        let ss = d.iter().map(|v| v * v).sum::<f64>();
        let expect = (3.0 / 3.0) * cross / ss;
        let t = morans_i(&z, &w, Alternative::TwoSided).unwrap();
        assert!((t.i - expect).abs() < 1e-12);
        assert!((t.null_mean + 0.5).abs() < 1e-12);
        assert!((t.z_score - (t.i - t.null_mean) / t.null_variance.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn null_calibration_on_rook_lattice() {
        let w = build_lattice_contiguity(LatticeSpec {
            rows: 20,
            cols: 20,
            scheme: ContiguityScheme::Rook,
        })
        .unwrap()
        .row_standardize();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let reps = 10_000;
        let mut sum_i = 0.0;
        let mut covered = 0usize;
        for _ in 0..reps {
            let z: Vec<f64> = (0..400).map(|_| rng.sample(StandardNormal)).collect();
            let t = morans_i(&z, &w, Alternative::TwoSided).unwrap();
            sum_i += t.i;
            if t.z_score.abs() <= 1.959963984540054 {
                covered += 1;
            }
        }
        let mean_i = sum_i / reps as f64;
        assert!((mean_i + 1.0 / 399.0).abs() < 2e-3, "mean I = {mean_i}");
        let coverage = covered as f64 / reps as f64;
        assert!((coverage - 0.95).abs() < 0.01, "coverage = {coverage}");
    }

    #[test]
    fn perfect_clustering_on_path() {
        let n = 60;
        let w = path_graph(n).row_standardize();
        let z: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect();
        let t = morans_i(&z, &w, Alternative::Greater).unwrap();
        assert!(t.i > 0.8);
        assert!(t.p_value < 1e-10);
    }

    #[test]
    fn affine_and_permutation_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 25;
        let w = build_lattice_contiguity(LatticeSpec {
            rows: 5,
            cols: 5,
            scheme: ContiguityScheme::Queen,
        })
        .unwrap()
        .row_standardize();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let base = morans_i(&z, &w, Alternative::TwoSided).unwrap();
        let za: Vec<f64> = z.iter().map(|v| -3.5 * v + 2.0).collect();
        let t = morans_i(&za, &w, Alternative::TwoSided).unwrap();
        assert!((t.i - base.i).abs() < 1e-12);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let wd = linalg::to_dense(w.matrix());
        let wp = WeightsMatrix::from_triplets(
            n,
            (0..n).flat_map(|i| {
                let perm = perm.clone();
                let wd = wd.clone();
                (0..n).filter_map(move |j| {
                    let v = wd[(perm[i], perm[j])];
                    (v != 0.0).then_some((i, j, v))
                })
            }),
        )
        .unwrap();
        let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        let t = morans_i(&zp, &wp, Alternative::TwoSided).unwrap();
        assert!((t.i - base.i).abs() < 1e-12);
        assert!((t.p_value - base.p_value).abs() < 1e-12);
    }

    #[test]
    fn constant_vector_rejected() {
        let w = path_graph(5);
        assert!(morans_i(&[2.0; 5], &w, Alternative::TwoSided).is_err());
    }

    #[test]
    fn alternative_tail_relations() {
        let w = path_graph(12).row_standardize();
        let z: Vec<f64> = (0..12).map(|i| (i as f64).sin() + 0.2 * i as f64).collect();
        let two = morans_i(&z, &w, Alternative::TwoSided).unwrap();
        let gr = morans_i(&z, &w, Alternative::Greater).unwrap();
        let le = morans_i(&z, &w, Alternative::Less).unwrap();
        assert!((gr.p_value + le.p_value - 1.0).abs() < 1e-12);
        let one_sided_min = gr.p_value.min(le.p_value);
        assert!((two.p_value - 2.0 * one_sided_min).abs() < 1e-12);
    }

    #[test]
    fn information_criteria_anchors() {
        let (aic, bic) = information_criteria(-269.51, 2, 400);
        assert!((aic - 543.02).abs() < 0.02);
        assert!((bic - 551.00).abs() < 0.02);
        let (aic, bic) = information_criteria(0.0, 1, 3);
        assert!((aic - 2.0).abs() < 1e-12);
        assert!((bic - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scatter_slope_equals_i_for_row_standardized() {
        let w = build_lattice_contiguity(LatticeSpec {
            rows: 6,
            cols: 6,
            scheme: ContiguityScheme::Rook,
        })
        .unwrap()
        .row_standardize();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let z: Vec<f64> = (0..36).map(|_| rng.sample(StandardNormal)).collect();
        let sc = moran_scatter_data(&z, &w).unwrap();
        let t = morans_i(&z, &w, Alternative::TwoSided).unwrap();
        assert!((sc.slope - t.i).abs() < 1e-10);
    }

    #[test]
    fn scatter_swap_and_constant_cases() {
        let w = WeightsMatrix::from_dense(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let sc = moran_scatter_data(&[3.0, -1.0], &w).unwrap();
        assert_eq!(sc.points, vec![(3.0, -1.0), (-1.0, 3.0)]);
        let w3 = path_graph(3).row_standardize();
        let sc = moran_scatter_data(&[5.0, 5.0, 5.0], &w3).unwrap();
        for (_, lag) in sc.points {
            assert!((lag - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qq_exact_normal_quantiles_on_identity_line() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 40;
        let q: Vec<f64> = (0..n)
            .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect();
        // Rescale so the standardization inside qq_data undoes itself up to
        // the sample mean/sd of the quantiles themselves.
        let qq = qq_data(&q).unwrap();
        let mean = q.iter().sum::<f64>() / n as f64;
        let sd = (q.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0))
            .sqrt();
        for (theo, sample) in &qq.points {
            let expect = (theo - mean) / sd;
            assert!((sample - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn qq_heavy_tails_bow_away_from_line() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        // Student t with 2 degrees of freedom via normal / sqrt(chi2/2).
        let z: Vec<f64> = (0..2000)
            .map(|_| {
                let num: f64 = rng.sample(StandardNormal);
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                num / ((a * a + b * b) / 2.0).sqrt()
            })
            .collect();
        let qq = qq_data(&z).unwrap();
        let (t_hi, s_hi) = *qq.points.last().unwrap();
        let (t_lo, s_lo) = qq.points[0];
        assert!(s_hi > qq.line_intercept + qq.line_slope * t_hi);
        assert!(s_lo < qq.line_intercept + qq.line_slope * t_lo);
    }

    #[test]
    fn qq_minimal_and_degenerate() {
        let qq = qq_data(&[1.0, 2.0]).unwrap();
        assert_eq!(qq.points.len(), 2);
        assert!(qq.line_slope.is_finite() && qq.line_intercept.is_finite());
        assert!(qq_data(&[1.0, 1.0, 1.0]).is_err());
        assert!(qq_data(&[1.0]).is_err());
    }
}
