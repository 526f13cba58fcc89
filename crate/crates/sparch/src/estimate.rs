//! Quasi-maximum-likelihood fitting with box constraints, standard
//! errors from the numerical Hessian, and stepwise model selection.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::diagnostics::{self, Alternative, MoranTest};
use crate::error::{Result, SparchError};
use crate::likelihood::{self, DesignMatrix, Parameters};
use crate::simulate::Family;
use crate::weights::WeightsMatrix;

/// Knobs for the constrained optimizer.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub multi_start: usize,
    pub alpha_min: f64,
    pub rho_min: f64,
    /// Estimate b instead of holding it at its default of 2.
    pub free_b: bool,
    pub b_min: f64,
    pub lambda_bounds: (f64, f64),
    /// Hold rho at this value instead of estimating it.
    pub fix_rho: Option<f64>,
    /// Hold lambda at this value instead of estimating it.
    pub fix_lambda: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 500,
            tolerance: 1e-8,
            multi_start: 3,
            alpha_min: 1e-8,
            rho_min: 0.0,
            free_b: false,
            b_min: 1e-3,
            lambda_bounds: (-0.999, 0.999),
            fix_rho: None,
            fix_lambda: None,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if self.tolerance <= 0.0 {
            return Err(SparchError::InvalidArgument(
                "optimizer tolerance must be positive".into(),
            ));
        }
        if self.max_iterations == 0 || self.multi_start == 0 {
            return Err(SparchError::InvalidArgument(
                "max_iterations and multi_start must be at least 1".into(),
            ));
        }
        if self.lambda_bounds.0 >= self.lambda_bounds.1 {
            return Err(SparchError::InvalidArgument(
                "lambda bounds are infeasible".into(),
            ));
        }
        Ok(())
    }
}

/// How the optimizer ended.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Labels of parameters pinned at a box bound.
    pub boundary: Vec<String>,
    pub message: String,
}

/// A fitted model: estimates with inference, goodness of fit, residual
/// diagnostics, and the convergence record.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FitResult {
    pub family: Family,
    pub labels: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub t_values: Vec<Option<f64>>,
    pub p_values: Vec<Option<f64>>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    pub k: usize,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub moran_residuals: Option<MoranTest>,
    pub moran_squared_residuals: Option<MoranTest>,
    pub convergence: ConvergenceReport,
    /// Design column labels in use; empty for pure ARCH fits.
    pub covariate_labels: Vec<String>,
    pub has_sar_term: bool,
    pub b_value: f64,
}

impl FitResult {
    pub fn parameters(&self) -> Parameters {
        let mut p = Parameters::arch(self.estimate("alpha (spARCH)"), self.estimate("rho (spARCH)"))
            .with_b(self.b_value);
        if self.has_sar_term || !self.covariate_labels.is_empty() {
            let lambda = if self.has_sar_term {
                self.estimate("lambda (SAR)")
            } else {
                0.0
            };
            let beta: Vec<f64> = self
                .covariate_labels
                .iter()
                .map(|l| self.estimate(l))
                .collect();
            p = p.with_mean(lambda, beta);
        }
        p
    }

    fn estimate(&self, label: &str) -> f64 {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.estimates[i])
            .unwrap_or(0.0)
    }
}

/// Central-difference Hessian with per-coordinate relative steps
/// max(1e-4 |theta_i|, 1e-5) (overridable), symmetrized. Non-finite probe
/// values trigger step halving, at most 5 times per coordinate pair.
pub fn numerical_hessian(
    objective: &dyn Fn(&[f64]) -> f64,
    point: &[f64],
    step: Option<f64>,
) -> Result<DMatrix<f64>> {
    let n = point.len();
    let base: Vec<f64> = point
        .iter()
        .map(|&t| step.unwrap_or_else(|| (1e-4 * t.abs()).max(1e-5)))
        .collect();
    let f0 = objective(point);
    if !f0.is_finite() {
        return Err(SparchError::DomainError(
            "objective is not finite at the Hessian expansion point".into(),
        ));
    }
    let probe = |x: &mut Vec<f64>, i: usize, hi: f64, j: usize, hj: f64| {
        x.copy_from_slice(point);
        x[i] += hi;
        if i == j {
            x[i] += hj;
        } else {
            x[j] += hj;
        }
        objective(x)
    };
    let mut h = DMatrix::zeros(n, n);
    let mut x = point.to_vec();
    for i in 0..n {
        for j in i..n {
            let mut hi = base[i];
            let mut hj = base[j];
            let mut value = None;
            for _ in 0..=5 {
                let v = if i == j {
                    let fp = probe(&mut x, i, hi, i, 0.0);
                    let fm = probe(&mut x, i, -hi, i, 0.0);
                    if fp.is_finite() && fm.is_finite() {
                        Some((fp - 2.0 * f0 + fm) / (hi * hi))
                    } else {
                        None
                    }
                } else {
                    let fpp = probe(&mut x, i, hi, j, hj);
                    let fpm = probe(&mut x, i, hi, j, -hj);
                    let fmp = probe(&mut x, i, -hi, j, hj);
                    let fmm = probe(&mut x, i, -hi, j, -hj);
                    if [fpp, fpm, fmp, fmm].iter().all(|v| v.is_finite()) {
                        Some((fpp - fpm - fmp + fmm) / (4.0 * hi * hj))
                    } else {
                        None
                    }
                };
                match v {
                    Some(v) => {
                        value = Some(v);
                        break;
                    }
                    None => {
                        hi *= 0.5;
                        hj *= 0.5;
                    }
                }
            }
            let v = value.ok_or_else(|| {
                SparchError::DomainError(format!(
                    "objective stayed non-finite around coordinates ({i}, {j}) \
                     after 5 step halvings"
                ))
            })?;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

struct MinimizeOutcome {
    x: Vec<f64>,
    fval: f64,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
}

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        let h = (1e-6 * x[i].abs()).max(1e-7);
        // One-sided steps when the box is in the way.
        let up = (x[i] + h).min(hi[i]) - x[i];
        let dn = x[i] - (x[i] - h).max(lo[i]);
        if up + dn == 0.0 {
            continue;
        }
        xp[i] = x[i] + up;
        let fp = f(&xp);
        xp[i] = x[i] - dn;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (up + dn)
        } else {
            0.0
        };
    }
    g
}

fn projected_gradient_norm(g: &[f64], x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let blocked_lo = x[i] - lo[i] < 1e-12 && g[i] > 0.0;
        let blocked_hi = hi[i] - x[i] < 1e-12 && g[i] < 0.0;
        if !(blocked_lo || blocked_hi) {
            s += g[i] * g[i];
        }
    }
    s.sqrt()
}

/// BFGS with gradient projection onto a box, Armijo backtracking.
fn projected_bfgs(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
    tol: f64,
) -> MinimizeOutcome {
    let n = x0.len();
    let mut x = x0.to_vec();
    clamp(&mut x, lo, hi);
    let mut fx = f(&x);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut g = gradient(f, &x, lo, hi);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let pg = projected_gradient_norm(&g, &x, lo, hi);
        if pg < 1e-7 * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
        let gv = DVector::from_column_slice(&g);
        let mut d: Vec<f64> = (-&h_inv * &gv).iter().copied().collect();
        for i in 0..n {
            let blocked_lo = x[i] - lo[i] < 1e-12 && d[i] < 0.0;
            let blocked_hi = hi[i] - x[i] < 1e-12 && d[i] > 0.0;
            if blocked_lo || blocked_hi {
                d[i] = 0.0;
            }
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if slope >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            for i in 0..n {
                d[i] = -g[i];
                let blocked_lo = x[i] - lo[i] < 1e-12 && d[i] < 0.0;
                let blocked_hi = hi[i] - x[i] < 1e-12 && d[i] > 0.0;
                if blocked_lo || blocked_hi {
                    d[i] = 0.0;
                }
            }
            slope = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
            if slope >= 0.0 {
                converged = true;
                break;
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            clamp(&mut xn, lo, hi);
            let fn_ = f(&xn);
            let actual_step: f64 = xn
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((a, b), gi)| (a - b) * gi)
                .sum();
            if fn_.is_finite() && fn_ <= fx + 1e-4 * actual_step {
                accepted = Some((xn, fn_));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else { break };
        let gn = gradient(f, &xn, lo, hi);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let step_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let df = (fx - fn_).abs();
        if sy > 1e-12 {
            let sv = DVector::from_column_slice(&s);
            let yvv = DVector::from_column_slice(&yv);
            let rho = 1.0 / sy;
            let i_mat = DMatrix::<f64>::identity(n, n);
            let left = &i_mat - rho * (&sv * yvv.transpose());
            h_inv = &left * h_inv * left.transpose() + rho * (&sv * sv.transpose());
        }
        x = xn;
        fx = fn_;
        g = gn;
        if step_norm < tol && df < tol {
            converged = true;
            break;
        }
    }
    let gradient_norm = projected_gradient_norm(&g, &x, lo, hi);
    MinimizeOutcome {
        x,
        fval: fx,
        iterations,
        gradient_norm,
        converged,
    }
}

/// Nelder-Mead restricted to a box by clamping every trial point.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
    tol: f64,
) -> MinimizeOutcome {
    let n = x0.len();
    let eval = |p: &mut Vec<f64>| {
        clamp(p, lo, hi);
        let v = f(p);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut p0 = x0.to_vec();
    let v0 = eval(&mut p0);
    simplex.push((p0, v0));
    for i in 0..n {
        let mut p = x0.to_vec();
        let step = (0.05 * x0[i].abs()).max(0.05);
        p[i] += if p[i] + step <= hi[i] { step } else { -step };
        let v = eval(&mut p);
        simplex.push((p, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = simplex[n].1 - simplex[0].1;
        let size: f64 = (0..n)
            .map(|i| (simplex[n].0[i] - simplex[0].0[i]).abs())
            .fold(0.0, f64::max);
        if spread.abs() < tol && size < tol.sqrt() {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(p, _)| p[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let mut refl: Vec<f64> = (0..n)
            .map(|i| centroid[i] + (centroid[i] - worst.0[i]))
            .collect();
        let fr = eval(&mut refl);
        if fr < simplex[0].1 {
            let mut exp: Vec<f64> = (0..n)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - worst.0[i]))
                .collect();
            let fe = eval(&mut exp);
            simplex[n] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (refl, fr);
        } else {
            let mut con: Vec<f64> = (0..n)
                .map(|i| centroid[i] + 0.5 * (worst.0[i] - centroid[i]))
                .collect();
            let fc = eval(&mut con);
            if fc < worst.1 {
                simplex[n] = (con, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let mut p: Vec<f64> = (0..n)
                        .map(|i| best[i] + 0.5 * (item.0[i] - best[i]))
                        .collect();
                    let v = eval(&mut p);
                    *item = (p, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let g = gradient(f, &simplex[0].0, lo, hi);
    let gradient_norm = projected_gradient_norm(&g, &simplex[0].0, lo, hi);
    MinimizeOutcome {
        x: simplex[0].0.clone(),
        fval: simplex[0].1,
        iterations,
        gradient_norm,
        converged,
    }
}

/// 5-point central gradient; reverts to the 3-point stencil per
/// coordinate when the box is too close.
fn gradient4(f: &dyn Fn(&[f64]) -> f64, x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        let h = (1e-4 * x[i].abs()).max(1e-5);
        if x[i] - 2.0 * h >= lo[i] && x[i] + 2.0 * h <= hi[i] {
            let mut probe = |d: f64| {
                xp[i] = x[i] + d;
                let v = f(&xp);
                xp[i] = x[i];
                v
            };
            let (f1, f2, f3, f4) = (probe(-2.0 * h), probe(-h), probe(h), probe(2.0 * h));
            if [f1, f2, f3, f4].iter().all(|v| v.is_finite()) {
                g[i] = (f1 - 8.0 * f2 + 8.0 * f3 - f4) / (12.0 * h);
                continue;
            }
        }
        let small = gradient(f, x, lo, hi);
        g[i] = small[i];
    }
    g
}

/// Damped Newton refinement on the coordinates away from the box bounds,
/// pushing the solution to the stationary point of the numerical
/// gradient so repeated fits of equivalent data agree tightly.
fn newton_polish(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    for _ in 0..30 {
        let free: Vec<usize> = (0..x.len())
            .filter(|&i| x[i] - lo[i] > 1e-9 && hi[i] - x[i] > 1e-9)
            .collect();
        if free.is_empty() {
            break;
        }
        let sub_f = {
            let x = x.clone();
            let free = free.clone();
            move |sub: &[f64]| {
                let mut full = x.clone();
                for (k, &i) in free.iter().enumerate() {
                    full[i] = sub[k];
                }
                f(&full)
            }
        };
        let sub_x: Vec<f64> = free.iter().map(|&i| x[i]).collect();
        let sub_lo: Vec<f64> = free.iter().map(|&i| lo[i]).collect();
        let sub_hi: Vec<f64> = free.iter().map(|&i| hi[i]).collect();
        let g = gradient4(&sub_f, &sub_x, &sub_lo, &sub_hi);
        let h = match numerical_hessian(&sub_f, &sub_x, None) {
            Ok(h) => h,
            Err(_) => break,
        };
        let gv = DVector::from_column_slice(&g);
        let Some(d) = h.lu().solve(&(-&gv)) else { break };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let mut xn = x.clone();
            for (k, &i) in free.iter().enumerate() {
                xn[i] = (sub_x[k] + t * d[k]).clamp(lo[i], hi[i]);
            }
            let fn_ = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-12 {
                let step = d.amax() * t;
                x = xn;
                fx = fn_;
                improved = true;
                if step < 1e-10 {
                    return (x, fx);
                }
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, fx)
}

fn minimize_boxed(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &OptimizerConfig,
) -> MinimizeOutcome {
    let bfgs = projected_bfgs(f, x0, lo, hi, cfg.max_iterations, cfg.tolerance);
    let threshold = 1e-4 * (1.0 + bfgs.fval.abs());
    let mut best = if bfgs.converged && bfgs.gradient_norm < threshold {
        bfgs
    } else {
        let nm = nelder_mead(f, &bfgs.x, lo, hi, cfg.max_iterations, cfg.tolerance);
        // Polish the simplex winner with another quasi-Newton pass.
        let polish = projected_bfgs(f, &nm.x, lo, hi, cfg.max_iterations, cfg.tolerance);
        let mut best = if polish.fval <= nm.fval { polish } else { nm };
        best.iterations += bfgs.iterations;
        if bfgs.fval < best.fval {
            bfgs
        } else {
            best
        }
    };
    if best.fval.is_finite() {
        let (x, fval) = newton_polish(f, &best.x, lo, hi);
        if fval <= best.fval {
            best.x = x;
            best.fval = fval;
            let g = gradient(f, &best.x, lo, hi);
            best.gradient_norm = projected_gradient_norm(&g, &best.x, lo, hi);
        }
    }
    best
}

/// One coordinate of the optimization vector.
struct Coord {
    label: String,
    lo: f64,
    hi: f64,
    init: f64,
}

struct Problem<'a> {
    y: &'a [f64],
    x: &'a DesignMatrix,
    b_mat: Option<&'a WeightsMatrix>,
    w: &'a WeightsMatrix,
    family: Family,
    coords: Vec<Coord>,
    fixed_rho: Option<f64>,
    fixed_lambda: Option<f64>,
    free_b: bool,
    b_default: f64,
}

impl Problem<'_> {
    fn params_from(&self, theta: &[f64]) -> Parameters {
        let mut idx = 0;
        let mut take = || {
            let v = theta[idx];
            idx += 1;
            v
        };
        let alpha = take();
        let rho = self.fixed_rho.unwrap_or_else(&mut take);
        let b = if self.free_b { take() } else { self.b_default };
        let mut p = Parameters::arch(alpha, rho).with_b(b);
        if self.b_mat.is_some() || self.x.ncols() > 0 {
            let lambda = if self.b_mat.is_some() {
                self.fixed_lambda.unwrap_or_else(&mut take)
            } else {
                0.0
            };
            let beta: Vec<f64> = (0..self.x.ncols()).map(|_| take()).collect();
            p = p.with_mean(lambda, beta);
        }
        p
    }

    fn loglik(&self, theta: &[f64]) -> f64 {
        let p = self.params_from(theta);
        let r = match self.b_mat {
            Some(b_mat) => {
                likelihood::loglik_sarsparch(self.y, self.x, &p, b_mat, self.w, self.family)
            }
            None => likelihood::loglik_sparch(self.y, &p, self.w, self.family),
        };
        r.unwrap_or(f64::NEG_INFINITY)
    }
}

fn lambda_bounds_for(b_mat: &WeightsMatrix, cfg: &OptimizerConfig) -> (f64, f64) {
    if b_mat.is_row_standardized() {
        return cfg.lambda_bounds;
    }
    // Feasibility from the reciprocal extreme real eigenvalues of B.
    let dense = crate::linalg::to_dense(b_mat.matrix());
    let eigs = dense.complex_eigenvalues();
    let mut max_pos = 0.0f64;
    let mut min_neg = 0.0f64;
    for e in eigs.iter() {
        if e.im.abs() < 1e-8 {
            max_pos = max_pos.max(e.re);
            min_neg = min_neg.min(e.re);
        }
    }
    let hi = if max_pos > 1e-12 { 0.999 / max_pos } else { cfg.lambda_bounds.1 };
    let lo = if min_neg < -1e-12 { 0.999 / min_neg } else { cfg.lambda_bounds.0 };
    (lo, hi)
}

fn ols(y: &[f64], x: &DesignMatrix) -> Vec<f64> {
    if x.ncols() == 0 {
        return Vec::new();
    }
    let yv = DVector::from_column_slice(y);
    let xm = x.matrix();
    let xtx = xm.transpose() * xm;
    let xty = xm.transpose() * yv;
    match xtx.cholesky() {
        Some(ch) => ch.solve(&xty).iter().copied().collect(),
        None => vec![0.0; x.ncols()],
    }
}

fn fit_problem(problem: &Problem<'_>, cfg: &OptimizerConfig) -> Result<FitResult> {
    cfg.validate()?;
    let n = problem.y.len();
    let dim = problem.coords.len();
    let lo: Vec<f64> = problem.coords.iter().map(|c| c.lo).collect();
    let hi: Vec<f64> = problem.coords.iter().map(|c| c.hi).collect();
    let base_init: Vec<f64> = problem.coords.iter().map(|c| c.init).collect();
    let labels: Vec<String> = problem.coords.iter().map(|c| c.label.clone()).collect();

    let objective = |theta: &[f64]| -problem.loglik(theta);

    let rho_idx = labels.iter().position(|l| l == "rho (spARCH)");
    let rho_starts: [f64; 3] = [0.1, 0.25, 0.5];
    let mut best: Option<MinimizeOutcome> = None;
    let mut start_values: Vec<f64> = Vec::new();
    for s in 0..cfg.multi_start {
        let mut x0 = base_init.clone();
        if let (Some(i), Some(&r)) = (rho_idx, rho_starts.get(s % rho_starts.len())) {
            x0[i] = r.clamp(lo[i], hi[i]);
        }
        let out = minimize_boxed(&objective, &x0, &lo, &hi, cfg);
        if out.fval.is_finite() {
            start_values.push(out.fval);
        }
        best = match best {
            Some(b) if b.fval <= out.fval => Some(b),
            _ => Some(out),
        };
    }
    let best = best.unwrap();
    if !best.fval.is_finite() {
        return Err(SparchError::NonConvergence(format!(
            "no start produced a finite likelihood; best point {:?}",
            best.x
        )));
    }

    let theta = best.x.clone();
    let loglik = -best.fval;
    let boundary: Vec<String> = (0..dim)
        .filter(|&i| {
            (theta[i] - lo[i] < 1e-7 && lo[i].is_finite())
                || (hi[i] - theta[i] < 1e-7 && hi[i].is_finite())
        })
        .map(|i| labels[i].clone())
        .collect();

    // Standard errors from -H on the interior coordinates only.
    let interior: Vec<usize> = (0..dim)
        .filter(|i| !boundary.contains(&labels[*i]))
        .collect();
    let mut std_errors: Vec<Option<f64>> = vec![None; dim];
    let mut se_message = String::new();
    if !interior.is_empty() {
        let sub_obj = |sub: &[f64]| {
            let mut full = theta.clone();
            for (k, &i) in interior.iter().enumerate() {
                full[i] = sub[k];
            }
            problem.loglik(&full)
        };
        let sub_point: Vec<f64> = interior.iter().map(|&i| theta[i]).collect();
        match numerical_hessian(&sub_obj, &sub_point, None) {
            Ok(h) => {
                let neg_h = -h;
                match neg_h.try_inverse() {
                    Some(cov) => {
                        for (k, &i) in interior.iter().enumerate() {
                            let v = cov[(k, k)];
                            if v > 0.0 {
                                std_errors[i] = Some(v.sqrt());
                            }
                        }
                        if interior.iter().any(|&i| std_errors[i].is_none()) {
                            se_message =
                                "negative curvature: some standard errors unavailable".into();
                        }
                    }
                    None => se_message = "-H is singular: standard errors unavailable".into(),
                }
            }
            Err(e) => se_message = format!("Hessian failed: {e}"),
        }
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let t_values: Vec<Option<f64>> = (0..dim)
        .map(|i| std_errors[i].map(|se| theta[i] / se))
        .collect();
    let p_values: Vec<Option<f64>> = t_values
        .iter()
        .map(|t| t.map(|t| 2.0 * normal.cdf(-t.abs())))
        .collect();

    let params = problem.params_from(&theta);
    let (fitted, residuals): (Vec<f64>, Vec<f64>) = match problem.b_mat {
        Some(b_mat) => {
            let u = likelihood::sar_residuals(
                problem.y,
                problem.x,
                params.lambda,
                &params.beta,
                b_mat,
            );
            let fitted = problem.y.iter().zip(&u).map(|(y, u)| y - u).collect();
            (fitted, u)
        }
        None => (vec![0.0; n], problem.y.to_vec()),
    };
    let res2: Vec<f64> = residuals.iter().map(|v| v * v).collect();
    let moran_residuals = diagnostics::morans_i(&residuals, problem.w, Alternative::TwoSided).ok();
    let moran_squared_residuals =
        diagnostics::morans_i(&res2, problem.w, Alternative::TwoSided).ok();

    let k = dim;
    let (aic, bic) = diagnostics::information_criteria(loglik, k, n);

    let spread = start_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let mut message = se_message;
    if start_values.len() > 1 && spread.1 - spread.0 > 1e-6 * (1.0 + spread.0.abs()) {
        if !message.is_empty() {
            message.push_str("; ");
        }
        message.push_str(&format!(
            "multi-start objective spread {:.3e}",
            spread.1 - spread.0
        ));
    }

    Ok(FitResult {
        family: problem.family,
        labels,
        estimates: theta,
        std_errors,
        t_values,
        p_values,
        loglik,
        aic,
        bic,
        n,
        k,
        fitted,
        residuals,
        moran_residuals,
        moran_squared_residuals,
        convergence: ConvergenceReport {
            converged: best.converged,
            iterations: best.iterations,
            final_gradient_norm: best.gradient_norm,
            boundary,
            message,
        },
        covariate_labels: problem.x.labels().to_vec(),
        has_sar_term: problem.b_mat.is_some(),
        b_value: params.b,
    })
}

fn arch_coords(y: &[f64], family: Family, cfg: &OptimizerConfig) -> Vec<Coord> {
    let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let alpha0 = match family {
        Family::Esparch => mean_sq.ln().max(cfg.alpha_min),
        _ => mean_sq.max(cfg.alpha_min),
    };
    let mut coords = vec![Coord {
        label: "alpha (spARCH)".into(),
        lo: cfg.alpha_min,
        hi: f64::INFINITY,
        init: alpha0,
    }];
    if cfg.fix_rho.is_none() {
        coords.push(Coord {
            label: "rho (spARCH)".into(),
            lo: cfg.rho_min,
            hi: f64::INFINITY,
            init: 0.25,
        });
    }
    if cfg.free_b {
        coords.push(Coord {
            label: "b (spARCH)".into(),
            lo: cfg.b_min,
            hi: f64::INFINITY,
            init: 2.0,
        });
    }
    coords
}

fn check_family_real(family: Family) -> Result<()> {
    match family {
        Family::SparchGaussian | Family::Esparch => Ok(()),
        other => Err(SparchError::InvalidArgument(format!(
            "the {other} family cannot be fitted"
        ))),
    }
}

/// Fit a pure spARCH or E-spARCH model to `y`.
pub fn fit_sparch(
    y: &[f64],
    w: &WeightsMatrix,
    family: Family,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    check_family_real(family)?;
    if y.len() < 10 {
        return Err(SparchError::InvalidArgument(format!(
            "at least 10 observations are required, got {}",
            y.len()
        )));
    }
    if y.len() != w.n() {
        return Err(SparchError::DimensionMismatch(format!(
            "{} observations against a {1} x {1} weight matrix",
            y.len(),
            w.n()
        )));
    }
    let empty = DesignMatrix::empty(y.len());
    let problem = Problem {
        y,
        x: &empty,
        b_mat: None,
        w,
        family,
        coords: arch_coords(y, family, cfg),
        fixed_rho: cfg.fix_rho,
        fixed_lambda: None,
        free_b: cfg.free_b,
        b_default: 2.0,
    };
    fit_problem(&problem, cfg)
}

/// Fit a SAR mean model with ARCH disturbances, jointly over
/// (alpha, rho, lambda, beta).
pub fn fit_sarsparch(
    y: &[f64],
    x: &DesignMatrix,
    b_mat: &WeightsMatrix,
    w: &WeightsMatrix,
    family: Family,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    fit_sarsparch_warm(y, x, b_mat, w, family, cfg, None)
}

fn fit_sarsparch_warm(
    y: &[f64],
    x: &DesignMatrix,
    b_mat: &WeightsMatrix,
    w: &WeightsMatrix,
    family: Family,
    cfg: &OptimizerConfig,
    warm: Option<&FitResult>,
) -> Result<FitResult> {
    check_family_real(family)?;
    if y.len() < 10 {
        return Err(SparchError::InvalidArgument(format!(
            "at least 10 observations are required, got {}",
            y.len()
        )));
    }
    if y.len() != w.n() || y.len() != b_mat.n() || y.len() != x.nrows() {
        return Err(SparchError::DimensionMismatch(format!(
            "y has {} rows, W is {}, B is {}, X has {} rows",
            y.len(),
            w.n(),
            b_mat.n(),
            x.nrows()
        )));
    }
    let mut coords = arch_coords(y, family, cfg);
    let (llo, lhi) = lambda_bounds_for(b_mat, cfg);
    if cfg.fix_lambda.is_none() {
        coords.push(Coord {
            label: "lambda (SAR)".into(),
            lo: llo,
            hi: lhi,
            init: 0.0,
        });
    }
    let beta0 = ols(y, x);
    for (j, label) in x.labels().iter().enumerate() {
        coords.push(Coord {
            label: label.clone(),
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            init: beta0[j],
        });
    }
    if let Some(prev) = warm {
        for c in coords.iter_mut() {
            if let Some(i) = prev.labels.iter().position(|l| l == &c.label) {
                c.init = prev.estimates[i].clamp(c.lo, c.hi);
            }
        }
    }
    let problem = Problem {
        y,
        x,
        b_mat: Some(b_mat),
        w,
        family,
        coords,
        fixed_rho: cfg.fix_rho,
        fixed_lambda: cfg.fix_lambda,
        free_b: cfg.free_b,
        b_default: 2.0,
    };
    fit_problem(&problem, cfg)
}

/// One step of the stepwise search.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepRecord {
    pub formula: String,
    pub bic: f64,
    pub action: String,
}

/// Stepwise output: the winning fit and the visited-model trace.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepwiseResult {
    pub fit: FitResult,
    pub trace: Vec<StepRecord>,
    /// Fit failures encountered and skipped, as human-readable notes.
    pub skipped: Vec<String>,
}

fn design_from(
    x_full: &DesignMatrix,
    selected: &[usize],
    include_intercept: bool,
) -> Result<DesignMatrix> {
    let n = x_full.nrows();
    let extra = usize::from(include_intercept);
    let mut m = DMatrix::zeros(n, selected.len() + extra);
    let mut labels = Vec::with_capacity(selected.len() + extra);
    if include_intercept {
        for i in 0..n {
            m[(i, 0)] = 1.0;
        }
        labels.push("(Intercept)".to_string());
    }
    for (k, &j) in selected.iter().enumerate() {
        for i in 0..n {
            m[(i, k + extra)] = x_full.matrix()[(i, j)];
        }
        labels.push(x_full.labels()[j].clone());
    }
    DesignMatrix::new(m, labels)
}

fn formula_string(x_full: &DesignMatrix, selected: &[usize]) -> String {
    if selected.is_empty() {
        "y ~ 1".to_string()
    } else {
        let terms: Vec<&str> = selected
            .iter()
            .map(|&j| x_full.labels()[j].as_str())
            .collect();
        format!("y ~ 1 + {}", terms.join(" + "))
    }
}

/// Greedy bidirectional covariate search minimizing BIC, starting from
/// the intercept-only model. `x_full` holds the candidate columns
/// (without an intercept; one is always included).
pub fn stepwise_bic(
    y: &[f64],
    x_full: &DesignMatrix,
    b_mat: &WeightsMatrix,
    w: &WeightsMatrix,
    family: Family,
    cfg: &OptimizerConfig,
) -> Result<StepwiseResult> {
    if x_full.ncols() == 0 {
        return Err(SparchError::InvalidArgument(
            "stepwise selection needs at least one candidate covariate".into(),
        ));
    }
    let mut skipped = Vec::new();
    let mut selected: Vec<usize> = Vec::new();
    let x0 = design_from(x_full, &selected, true)?;
    let mut current = fit_sarsparch(y, &x0, b_mat, w, family, cfg)?;
    let mut trace = vec![StepRecord {
        formula: formula_string(x_full, &selected),
        bic: current.bic,
        action: "start".into(),
    }];
    loop {
        let mut best_move: Option<(Vec<usize>, FitResult, String)> = None;
        let mut candidates: Vec<(Vec<usize>, String)> = Vec::new();
        for j in 0..x_full.ncols() {
            if !selected.contains(&j) {
                let mut s = selected.clone();
                s.push(j);
                s.sort_unstable();
                candidates.push((s, format!("+ {}", x_full.labels()[j])));
            }
        }
        for &j in &selected {
            let s: Vec<usize> = selected.iter().copied().filter(|&k| k != j).collect();
            candidates.push((s, format!("- {}", x_full.labels()[j])));
        }
        for (s, action) in candidates {
            let design = match design_from(x_full, &s, true) {
                Ok(d) => d,
                Err(e) => {
                    skipped.push(format!("{action}: {e}"));
                    continue;
                }
            };
            match fit_sarsparch_warm(y, &design, b_mat, w, family, cfg, Some(&current)) {
                Ok(fit) => {
                    let better_than_best = best_move
                        .as_ref()
                        .map(|(_, b, _)| fit.bic < b.bic)
                        .unwrap_or(true);
                    if fit.bic < current.bic - 1e-10 && better_than_best {
                        best_move = Some((s, fit, action));
                    }
                }
                Err(e) => skipped.push(format!("{action}: {e}")),
            }
        }
        match best_move {
            Some((s, fit, action)) => {
                selected = s;
                current = fit;
                trace.push(StepRecord {
                    formula: formula_string(x_full, &selected),
                    bic: current.bic,
                    action,
                });
            }
            None => break,
        }
    }
    Ok(StepwiseResult {
        fit: current,
        trace,
        skipped,
    })
}

/// Refit with columns added to or dropped from the design, warm-starting
/// from the previous estimates.
pub fn update_model(
    fit: &FitResult,
    y: &[f64],
    x_full: &DesignMatrix,
    b_mat: &WeightsMatrix,
    w: &WeightsMatrix,
    cfg: &OptimizerConfig,
    add: &[&str],
    drop: &[&str],
) -> Result<FitResult> {
    let mut labels: Vec<String> = fit.covariate_labels.clone();
    for d in drop {
        let Some(pos) = labels.iter().position(|l| l == d) else {
            return Err(SparchError::UnknownColumn(format!(
                "'{d}' is not in the current model"
            )));
        };
        labels.remove(pos);
    }
    for a in add {
        labels.push((*a).to_string());
    }
    let n = y.len();
    let mut m = DMatrix::zeros(n, labels.len());
    for (k, label) in labels.iter().enumerate() {
        if label == "(Intercept)" {
            for i in 0..n {
                m[(i, k)] = 1.0;
            }
            continue;
        }
        let Some(j) = x_full.labels().iter().position(|l| l == label) else {
            return Err(SparchError::UnknownColumn(format!(
                "'{label}' is not a known covariate"
            )));
        };
        for i in 0..n {
            m[(i, k)] = x_full.matrix()[(i, j)];
        }
    }
    let design = DesignMatrix::new(m, labels)?;
    fit_sarsparch_warm(y, &design, b_mat, w, fit.family, cfg, Some(fit))
}
