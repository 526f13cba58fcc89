//! Moran's I on observations and squared observations, plus Q-Q data
//! for the standardized residuals of a fitted model.

use sparch::diagnostics::{morans_i, moran_scatter_data, qq_data, Alternative};
use sparch::estimate::{fit_sparch, OptimizerConfig};
use sparch::simulate::{simulate, Family, SimulationSpec};
use sparch::weights::{build_lattice_contiguity, ContiguityScheme, LatticeSpec};

fn main() {
    let w = build_lattice_contiguity(LatticeSpec {
        rows: 20,
        cols: 20,
        scheme: ContiguityScheme::Rook,
    })
    .unwrap()
    .row_standardize();
    let spec = SimulationSpec::new(Family::SparchGaussian, 1.0, 0.8, 12).unwrap();
    let field = simulate(&spec, &w).unwrap();
    let y = field.y_real().unwrap();
    let y2: Vec<f64> = y.iter().map(|v| v * v).collect();

    // The spARCH signature: the observations look spatially uncorrelated,
    // their squares do not.
    let t_y = morans_i(&y, &w, Alternative::TwoSided).unwrap();
    let t_y2 = morans_i(&y2, &w, Alternative::Greater).unwrap();
    println!("Moran's I of y   = {:+.4}, p = {:.4} (two-sided)", t_y.i, t_y.p_value);
    println!("Moran's I of y^2 = {:+.4}, p = {:.4} (greater)", t_y2.i, t_y2.p_value);

    let scatter = moran_scatter_data(&y2, &w).unwrap();
    println!("Moran scatter slope of y^2 = {:.4} (equals I)", scatter.slope);

    let fit = fit_sparch(&y, &w, Family::SparchGaussian, &OptimizerConfig::default()).unwrap();
    let p = fit.parameters();
    let h = sparch::likelihood::h_sparch(&y, p.alpha, p.rho, &w);
    let eps: Vec<f64> = y.iter().zip(&h).map(|(yi, hi)| yi / hi.sqrt()).collect();
    let qq = qq_data(&eps).unwrap();
    println!(
        "Q-Q reference line: intercept {:.4}, slope {:.4}; {} points",
        qq.line_intercept,
        qq.line_slope,
        qq.points.len()
    );
}
