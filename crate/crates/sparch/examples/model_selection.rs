//! Stepwise BIC selection over candidate covariates, then a manual
//! update of the winning model.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use sparch::estimate::{stepwise_bic, update_model, OptimizerConfig};
use sparch::likelihood::DesignMatrix;
use sparch::simulate::{simulate, Family, SimulationSpec};
use sparch::weights::{build_lattice_contiguity, ContiguityScheme, LatticeSpec};

fn main() {
    let w = build_lattice_contiguity(LatticeSpec {
        rows: 12,
        cols: 12,
        scheme: ContiguityScheme::Queen,
    })
    .unwrap()
    .row_standardize();
    let n = 144;
    let mut rng = ChaCha12Rng::seed_from_u64(55);

    // Disturbances from a spARCH field; only x1 enters the truth.
    let spec = SimulationSpec::new(Family::SparchGaussian, 1.0, 0.3, 56).unwrap();
    let u = simulate(&spec, &w).unwrap().y_real().unwrap();
    let mut xm = DMatrix::zeros(n, 3);
    let mut y = vec![0.0; n];
    for i in 0..n {
        for j in 0..3 {
            xm[(i, j)] = rng.gen_range(-1.0..1.0);
        }
        y[i] = 0.5 + 1.5 * xm[(i, 0)] + u[i];
    }
    let x_full =
        DesignMatrix::new(xm, vec!["x1".into(), "x2".into(), "x3".into()]).unwrap();

    let cfg = OptimizerConfig::default();
    let out = stepwise_bic(&y, &x_full, &w, &w, Family::SparchGaussian, &cfg).unwrap();
    println!("stepwise trace:");
    for rec in &out.trace {
        println!("  {:>8}  BIC = {:.3}  {}", rec.action, rec.bic, rec.formula);
    }
    println!("selected covariates: {:?}", out.fit.covariate_labels);

    // Force one of the noise columns back in; the AIC gets worse.
    let worse = update_model(&out.fit, &y, &x_full, &w, &w, &cfg, &["x2"], &[]).unwrap();
    println!(
        "AIC selected = {:.3}, AIC with x2 added = {:.3}",
        out.fit.aic, worse.aic
    );
}
