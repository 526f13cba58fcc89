//! h-vectors, Jacobian log-determinants, and log-likelihoods for the
//! spARCH, E-spARCH, and SARspARCH models.
//!
//! The observation density follows from the change of variables
//! eps = y / sqrt(h(y)): ln f(y) = ln|det d(eps)/d(y)| + sum ln phi(eps_i).
//! For spARCH the determinant is evaluated through the sparse form
//! ln|det(diag(h_i/y_i^2) - rho W')| + sum ln(y_i^2 / h_i^{3/2}).
//! For E-spARCH the exact Jacobian determinant collapses to
//! -ln det(I + (1/2) rho b W) - (1/2) sum ln h_i.

use nalgebra::DMatrix;

use crate::error::{Result, SparchError};
use crate::linalg::{self, SparseLu};
use crate::simulate::Family;
use crate::weights::WeightsMatrix;

const LN_SQRT_2PI: f64 = 0.9189385332046727; // ln sqrt(2 pi)

/// Model parameters across families. `b` only matters for E-spARCH,
/// `lambda` and `beta` only for SARspARCH.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Parameters {
    pub alpha: f64,
    pub rho: f64,
    pub b: f64,
    pub lambda: f64,
    pub beta: Vec<f64>,
}

impl Parameters {
    pub fn arch(alpha: f64, rho: f64) -> Self {
        Parameters {
            alpha,
            rho,
            b: 2.0,
            lambda: 0.0,
            beta: Vec::new(),
        }
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    pub fn with_mean(mut self, lambda: f64, beta: Vec<f64>) -> Self {
        self.lambda = lambda;
        self.beta = beta;
        self
    }

    /// The ARCH part is inside its admissible region.
    pub fn arch_valid(&self) -> bool {
        self.alpha > 0.0 && self.rho >= 0.0 && self.b > 0.0
    }
}

/// Covariate matrix with named columns; validated to full column rank.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(SparchError::DimensionMismatch(format!(
                "{} labels for {} columns",
                labels.len(),
                x.ncols()
            )));
        }
        if x.ncols() > 0 {
            let rank = x.clone().svd(false, false).rank(1e-10 * x.amax().max(1.0));
            if rank < x.ncols() {
                return Err(SparchError::RankDeficient(format!(
                    "design matrix has rank {} with {} columns",
                    rank,
                    x.ncols()
                )));
            }
        }
        Ok(DesignMatrix { x, labels })
    }

    /// n x 0 design (pure ARCH / intercept-free SAR).
    pub fn empty(n: usize) -> Self {
        DesignMatrix {
            x: DMatrix::zeros(n, 0),
            labels: Vec::new(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }
}

/// The operator S = (I + (1/2) rho b W)^{-1}, held as a factorization.
pub struct SMatrix {
    lu: SparseLu,
    ln_det_inner: f64,
}

impl SMatrix {
    /// Factor I + (1/2) rho b W; fails when its determinant is not
    /// strictly positive (invalid parameter region).
    pub fn new(rho: f64, b: f64, w: &WeightsMatrix) -> Result<Self> {
        let n = w.n();
        let c = 0.5 * rho * b;
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(n + w.nnz());
        for i in 0..n {
            entries.push((i, i, 1.0));
        }
        for (v, (i, j)) in w.matrix().iter() {
            if *v != 0.0 {
                entries.push((i, j, c * v));
            }
        }
        let m = linalg::from_triplets(n, n, entries).to_csc();
        let lu = SparseLu::factor_with_order(&m, w.fill_order())?;
        if lu.det_sign() <= 0.0 {
            return Err(SparchError::DomainError(
                "det(I + rho b W / 2) is not positive".into(),
            ));
        }
        Ok(SMatrix {
            ln_det_inner: lu.ln_abs_det(),
            lu,
        })
    }

    /// x = S v, one sparse solve against I + (1/2) rho b W.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.lu.solve(v)
    }

    /// ln det(I + (1/2) rho b W) = -ln det S.
    pub fn ln_det_inner(&self) -> f64 {
        self.ln_det_inner
    }
}

/// h = alpha 1 + rho W y^2 (elementwise square).
pub fn h_sparch(y: &[f64], alpha: f64, rho: f64, w: &WeightsMatrix) -> Vec<f64> {
    let y2: Vec<f64> = y.iter().map(|v| v * v).collect();
    let lag = linalg::mat_vec(w.matrix(), &y2);
    lag.iter().map(|l| alpha + rho * l).collect()
}

fn check_nonzero(y: &[f64]) -> Result<()> {
    let zeros: Vec<usize> = y
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == 0.0)
        .map(|(i, _)| i + 1)
        .collect();
    if zeros.is_empty() {
        Ok(())
    } else {
        Err(SparchError::DomainError(format!(
            "observations at positions {zeros:?} are exactly zero"
        )))
    }
}

/// E-spARCH h from observed data: ln h = S (alpha 1 + rho b W ln|y|),
/// strictly positive by construction.
pub fn h_esparch(y: &[f64], alpha: f64, rho: f64, b: f64, w: &WeightsMatrix) -> Result<Vec<f64>> {
    check_nonzero(y)?;
    let s = SMatrix::new(rho, b, w)?;
    h_esparch_with(y, alpha, rho, b, w, &s)
}

/// Same as [`h_esparch`] with a caller-provided factorization.
pub fn h_esparch_with(
    y: &[f64],
    alpha: f64,
    rho: f64,
    b: f64,
    w: &WeightsMatrix,
    s: &SMatrix,
) -> Result<Vec<f64>> {
    check_nonzero(y)?;
    let ln_abs: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let lag = linalg::mat_vec(w.matrix(), &ln_abs);
    let rhs: Vec<f64> = lag.iter().map(|l| alpha + rho * b * l).collect();
    Ok(s.apply(&rhs).iter().map(|lh| lh.exp()).collect())
}

/// ln|det d(y/sqrt(h))/dy| for the spARCH family. Returns -inf when any
/// h_i <= 0 so a constrained optimizer is pushed away from the region.
pub fn logdet_jacobian_sparch(y: &[f64], alpha: f64, rho: f64, w: &WeightsMatrix) -> Result<f64> {
    check_nonzero(y)?;
    let h = h_sparch(y, alpha, rho, w);
    if h.iter().any(|&hi| hi <= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let n = w.n();
    // diag(h_i / y_i^2) - rho W'
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(n + w.nnz());
    for i in 0..n {
        entries.push((i, i, h[i] / (y[i] * y[i])));
    }
    for (v, (i, j)) in w.matrix().iter() {
        if *v != 0.0 {
            entries.push((j, i, -rho * v));
        }
    }
    let m = linalg::from_triplets(n, n, entries).to_csc();
    let ln_det = match linalg::ln_abs_det_with_order(&m, w.fill_order()) {
        Ok((ln, _)) => ln,
        Err(_) => return Ok(f64::NEG_INFINITY),
    };
    let correction: f64 = y
        .iter()
        .zip(&h)
        .map(|(&yi, &hi)| (yi * yi).ln() - 1.5 * hi.ln())
        .sum();
    Ok(ln_det + correction)
}

/// ln|det d(y/sqrt(h))/dy| for the E-spARCH family, via the exact
/// reduction -ln det(I + (1/2) rho b W) - (1/2) sum ln h_i.
pub fn logdet_jacobian_esparch(
    y: &[f64],
    alpha: f64,
    rho: f64,
    b: f64,
    w: &WeightsMatrix,
) -> Result<f64> {
    check_nonzero(y)?;
    let s = match SMatrix::new(rho, b, w) {
        Ok(s) => s,
        Err(SparchError::DomainError(_)) | Err(SparchError::SingularSystem(_)) => {
            return Ok(f64::NEG_INFINITY)
        }
        Err(e) => return Err(e),
    };
    let h = h_esparch_with(y, alpha, rho, b, w, &s)?;
    if h.iter().any(|&hi| hi <= 0.0 || !hi.is_finite()) {
        return Ok(f64::NEG_INFINITY);
    }
    let sum_ln_h: f64 = h.iter().map(|hi| hi.ln()).sum();
    Ok(-s.ln_det_inner() - 0.5 * sum_ln_h)
}

fn ln_std_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Gaussian quasi-log-likelihood of a pure ARCH field:
/// logdet + sum ln phi(y_i / sqrt(h_i)).
pub fn loglik_sparch(y: &[f64], params: &Parameters, w: &WeightsMatrix, family: Family) -> Result<f64> {
    if !params.arch_valid() {
        return Ok(f64::NEG_INFINITY);
    }
    let (logdet, h) = match family {
        Family::SparchGaussian => {
            let h = h_sparch(y, params.alpha, params.rho, w);
            (logdet_jacobian_sparch(y, params.alpha, params.rho, w)?, h)
        }
        Family::Esparch => {
            // One S-matrix factorization serves both the Jacobian and h.
            let s = match SMatrix::new(params.rho, params.b, w) {
                Ok(s) => s,
                Err(SparchError::DomainError(_)) | Err(SparchError::SingularSystem(_)) => {
                    return Ok(f64::NEG_INFINITY)
                }
                Err(e) => return Err(e),
            };
            let h = h_esparch_with(y, params.alpha, params.rho, params.b, w, &s)?;
            if h.iter().any(|&hi| hi <= 0.0 || !hi.is_finite()) {
                return Ok(f64::NEG_INFINITY);
            }
            let sum_ln_h: f64 = h.iter().map(|hi| hi.ln()).sum();
            (-s.ln_det_inner() - 0.5 * sum_ln_h, h)
        }
        other => {
            return Err(SparchError::InvalidArgument(format!(
                "no likelihood is defined for the {other} family"
            )))
        }
    };
    if logdet == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if h.iter().any(|&hi| hi <= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let density: f64 = y
        .iter()
        .zip(&h)
        .map(|(&yi, &hi)| ln_std_normal_pdf(yi / hi.sqrt()))
        .sum();
    Ok(logdet + density)
}

/// ln|det(I - lambda B)|, or None when singular.
pub fn sar_logdet(lambda: f64, b_mat: &WeightsMatrix) -> Option<f64> {
    let n = b_mat.n();
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(n + b_mat.nnz());
    for i in 0..n {
        entries.push((i, i, 1.0));
    }
    for (v, (i, j)) in b_mat.matrix().iter() {
        if *v != 0.0 {
            entries.push((i, j, -lambda * v));
        }
    }
    let m = linalg::from_triplets(n, n, entries).to_csc();
    linalg::ln_abs_det_with_order(&m, b_mat.fill_order())
        .ok()
        .map(|(ln, _)| ln)
}

/// Disturbances of the SAR mean equation: u = (I - lambda B) y - X beta.
pub fn sar_residuals(
    y: &[f64],
    x: &DesignMatrix,
    lambda: f64,
    beta: &[f64],
    b_mat: &WeightsMatrix,
) -> Vec<f64> {
    let lag = linalg::mat_vec(b_mat.matrix(), y);
    let xb = x.matrix() * nalgebra::DVector::from_column_slice(beta);
    (0..y.len())
        .map(|i| y[i] - lambda * lag[i] - xb[i])
        .collect()
}

/// SARspARCH joint log-likelihood: the SAR Jacobian term plus the ARCH
/// likelihood of the disturbances.
pub fn loglik_sarsparch(
    y: &[f64],
    x: &DesignMatrix,
    params: &Parameters,
    b_mat: &WeightsMatrix,
    w: &WeightsMatrix,
    family: Family,
) -> Result<f64> {
    if x.ncols() != params.beta.len() {
        return Err(SparchError::DimensionMismatch(format!(
            "{} regression coefficients for {} design columns",
            params.beta.len(),
            x.ncols()
        )));
    }
    let sar_ld = match sar_logdet(params.lambda, b_mat) {
        Some(v) => v,
        None => return Ok(f64::NEG_INFINITY),
    };
    let u = sar_residuals(y, x, params.lambda, &params.beta, b_mat);
    if u.iter().any(|&v| v == 0.0) {
        // Measure-zero configuration where the ARCH density degenerates.
        return Ok(f64::NEG_INFINITY);
    }
    Ok(sar_ld + loglik_sparch(&u, params, w, family)?)
}
