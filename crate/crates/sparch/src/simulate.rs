//! Simulation of spARCH, E-spARCH, complex spARCH, and white-noise
//! fields.
//!
//! All draws go through a ChaCha12 stream cipher RNG seeded from a single
//! 64-bit value, and the truncated normal sampler uses the inverse-CDF
//! transform, so a (spec, W, seed) triple always reproduces the same
//! field bit for bit.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SparchError};
use crate::linalg::{self, SparseLu};
use crate::weights::WeightsMatrix;

/// Model family shared by the simulation and likelihood paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SparchGaussian,
    Esparch,
    Complex,
    WhiteNoise,
}

impl std::str::FromStr for Family {
    type Err = SparchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparch_gaussian" | "gaussian" | "sparch" => Ok(Family::SparchGaussian),
            "esparch" | "exp" => Ok(Family::Esparch),
            "complex" => Ok(Family::Complex),
            "white_noise" | "white-noise" => Ok(Family::WhiteNoise),
            other => Err(SparchError::InvalidArgument(format!(
                "unknown family '{other}' (expected sparch_gaussian | esparch | complex | white_noise)"
            ))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Family::SparchGaussian => "sparch_gaussian",
            Family::Esparch => "esparch",
            Family::Complex => "complex",
            Family::WhiteNoise => "white_noise",
        };
        f.write_str(s)
    }
}

/// Parameters of a simulation run.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SimulationSpec {
    pub alpha: f64,
    pub rho: f64,
    /// E-spARCH exponent; ignored by the other families.
    pub b: f64,
    pub family: Family,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(family: Family, alpha: f64, rho: f64, seed: u64) -> Result<Self> {
        let spec = SimulationSpec {
            alpha,
            rho,
            b: 2.0,
            family,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_b(mut self, b: f64) -> Result<Self> {
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(SparchError::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.rho >= 0.0) {
            return Err(SparchError::InvalidArgument(format!(
                "rho must be nonnegative, got {}",
                self.rho
            )));
        }
        if !(self.b > 0.0) {
            return Err(SparchError::InvalidArgument(format!(
                "b must be positive, got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// One simulated field: the observations, the errors that produced them,
/// and the volatility-like vector h. In the complex family h may be
/// negative and the matching observation purely imaginary.
#[derive(Debug, Clone)]
pub struct SimulatedField {
    pub y: Vec<Complex64>,
    pub eps: Vec<f64>,
    pub h: Vec<f64>,
}

impl SimulatedField {
    /// Real view of the observations; None if any component has a
    /// nonzero imaginary part.
    pub fn y_real(&self) -> Option<Vec<f64>> {
        if self.y.iter().all(|c| c.im == 0.0) {
            Some(self.y.iter().map(|c| c.re).collect())
        } else {
            None
        }
    }
}

/// I.i.d. draws from a standard normal conditioned on (-a, a), via the
/// inverse-CDF transform of uniforms. `a = inf` yields plain standard
/// normal draws through the same deterministic path.
pub fn sample_truncated_normal(a: f64, count: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(a > 0.0) {
        return Err(SparchError::InvalidArgument(format!(
            "truncation bound must be positive, got {a}"
        )));
    }
    let normal = Normal::standard();
    let (lo, hi) = if a.is_infinite() {
        (0.0, 1.0)
    } else {
        (normal.cdf(-a), normal.cdf(a))
    };
    Ok((0..count)
        .map(|_| {
            let u: f64 = rng.gen();
            normal.inverse_cdf(lo + u * (hi - lo))
        })
        .collect())
}

/// Closed-form variance of the standard normal truncated to (-a, a):
/// 1 - 2a phi(a) / (2 Phi(a) - 1).
pub fn truncated_normal_variance(a: f64) -> f64 {
    if a.is_infinite() {
        return 1.0;
    }
    let normal = Normal::standard();
    let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    1.0 - 2.0 * a * phi / (2.0 * normal.cdf(a) - 1.0)
}

/// Dispatch on the family of the spec.
pub fn simulate(spec: &SimulationSpec, w: &WeightsMatrix) -> Result<SimulatedField> {
    spec.validate()?;
    match spec.family {
        Family::SparchGaussian => simulate_sparch(spec, w),
        Family::Esparch => simulate_esparch(spec, w),
        Family::Complex => simulate_complex(spec, w),
        Family::WhiteNoise => simulate_white_noise(spec, w),
    }
}

fn rng_for(spec: &SimulationSpec) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(spec.seed)
}

/// Solve (I - A) y2 = alpha * eps^2 with A = rho * diag(eps^2) * W.
fn solve_squared_system(
    eps: &[f64],
    alpha: f64,
    rho: f64,
    w: &WeightsMatrix,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = w.n();
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(n + w.nnz());
    for i in 0..n {
        entries.push((i, i, 1.0));
    }
    for (v, (i, j)) in w.matrix().iter() {
        if *v != 0.0 {
            entries.push((i, j, -rho * eps[i] * eps[i] * v));
        }
    }
    let m = linalg::from_triplets(n, n, entries).to_csc();
    let lu = SparseLu::factor(&m).map_err(|_| {
        SparchError::SingularSystem(format!("(I - A) is singular for seed {seed}"))
    })?;
    let rhs: Vec<f64> = eps.iter().map(|e| alpha * e * e).collect();
    Ok(lu.solve(&rhs))
}

/// Core spARCH simulation for a given error vector; exposed for the
/// oracle tests that inject hand-picked errors.
pub fn simulate_sparch_from_errors(
    eps: &[f64],
    alpha: f64,
    rho: f64,
    w: &WeightsMatrix,
    seed: u64,
) -> Result<SimulatedField> {
    let y2 = solve_squared_system(eps, alpha, rho, w, seed)?;
    let mut y = Vec::with_capacity(y2.len());
    let mut h = Vec::with_capacity(y2.len());
    for (i, (&s, &e)) in y2.iter().zip(eps).enumerate() {
        if s < -1e-12 {
            return Err(SparchError::RegularityViolation {
                detail: format!("y^2 component {} is {}", i + 1, s),
                seed,
            });
        }
        let s = s.max(0.0);
        h.push(if e == 0.0 { alpha } else { s / (e * e) });
        y.push(Complex64::new(e.signum() * s.sqrt(), 0.0));
    }
    Ok(SimulatedField {
        y,
        eps: eps.to_vec(),
        h,
    })
}

/// spARCH with Gaussian errors: oriented (nilpotent W) processes use
/// unrestricted standard normal errors, all others truncate the error
/// support at the Lemma-1 bound.
pub fn simulate_sparch(spec: &SimulationSpec, w: &WeightsMatrix) -> Result<SimulatedField> {
    let mut rng = rng_for(spec);
    let a = if w.strictly_triangularizable().is_some() {
        f64::INFINITY
    } else {
        w.truncation_bound(spec.rho)
    };
    let eps = sample_truncated_normal(a, w.n(), &mut rng)?;
    simulate_sparch_from_errors(&eps, spec.alpha, spec.rho, w, spec.seed)
}

/// E-spARCH: ln h = alpha * 1 + rho * b * W ln|eps|, always well defined.
pub fn simulate_esparch(spec: &SimulationSpec, w: &WeightsMatrix) -> Result<SimulatedField> {
    let mut rng = rng_for(spec);
    let mut eps = sample_truncated_normal(f64::INFINITY, w.n(), &mut rng)?;
    for e in eps.iter_mut() {
        // Probability-zero event; redraw rather than feed ln|0| downstream.
        while *e == 0.0 {
            eprintln!("sparch: redrew a zero error coordinate in E-spARCH simulation");
            *e = sample_truncated_normal(f64::INFINITY, 1, &mut rng)?[0];
        }
    }
    simulate_esparch_from_errors(&eps, spec.alpha, spec.rho, spec.b, w)
}

pub fn simulate_esparch_from_errors(
    eps: &[f64],
    alpha: f64,
    rho: f64,
    b: f64,
    w: &WeightsMatrix,
) -> Result<SimulatedField> {
    let ln_abs: Vec<f64> = eps.iter().map(|e| e.abs().ln()).collect();
    let lagged = linalg::mat_vec(w.matrix(), &ln_abs);
    let h: Vec<f64> = lagged.iter().map(|l| (alpha + rho * b * l).exp()).collect();
    let y = h
        .iter()
        .zip(eps)
        .map(|(&hi, &e)| Complex64::new(hi.sqrt() * e, 0.0))
        .collect();
    Ok(SimulatedField {
        y,
        eps: eps.to_vec(),
        h,
    })
}

/// Complex spARCH: same squared system as the real model, but negative
/// solved components are kept and mapped to purely imaginary
/// observations through the principal square root.
pub fn simulate_complex(spec: &SimulationSpec, w: &WeightsMatrix) -> Result<SimulatedField> {
    let mut rng = rng_for(spec);
    let eps = sample_truncated_normal(f64::INFINITY, w.n(), &mut rng)?;
    let y2 = solve_squared_system(&eps, spec.alpha, spec.rho, w, spec.seed)?;
    let mut y = Vec::with_capacity(y2.len());
    let mut h = Vec::with_capacity(y2.len());
    for (&s, &e) in y2.iter().zip(&eps) {
        let hi = if e == 0.0 { spec.alpha } else { s / (e * e) };
        h.push(hi);
        // principal sqrt: real for h >= 0, imaginary for h < 0.
        if hi >= 0.0 {
            y.push(Complex64::new(s.max(0.0).sqrt() * e.signum(), 0.0));
        } else {
            y.push(Complex64::new(0.0, (-s).sqrt() * e.signum()));
        }
    }
    Ok(SimulatedField { y, eps, h })
}

/// Spatial white noise: y = sqrt(alpha) * eps.
pub fn simulate_white_noise(spec: &SimulationSpec, w: &WeightsMatrix) -> Result<SimulatedField> {
    let mut rng = rng_for(spec);
    let eps = sample_truncated_normal(f64::INFINITY, w.n(), &mut rng)?;
    let sqrt_alpha = spec.alpha.sqrt();
    Ok(SimulatedField {
        y: eps
            .iter()
            .map(|&e| Complex64::new(sqrt_alpha * e, 0.0))
            .collect(),
        h: vec![spec.alpha; eps.len()],
        eps,
    })
}
