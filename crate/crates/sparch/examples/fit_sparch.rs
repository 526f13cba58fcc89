//! Simulate an E-spARCH field and fit it back, printing the full
//! summary block.

use sparch::estimate::{fit_sparch, OptimizerConfig};
use sparch::io::summary_text;
use sparch::simulate::{simulate, Family, SimulationSpec};
use sparch::weights::{build_lattice_contiguity, ContiguityScheme, LatticeSpec};

fn main() {
    let w = build_lattice_contiguity(LatticeSpec {
        rows: 20,
        cols: 20,
        scheme: ContiguityScheme::Queen,
    })
    .unwrap()
    .row_standardize();
    let spec = SimulationSpec::new(Family::Esparch, 1.0, 0.5, 4711).unwrap();
    let field = simulate(&spec, &w).unwrap();
    let y = field.y_real().unwrap();

    let fit = fit_sparch(&y, &w, Family::Esparch, &OptimizerConfig::default()).unwrap();
    print!("{}", summary_text(&fit, "fit_sparch(y, W, esparch) on simulated data"));
    println!(
        "\ntruth: alpha = 1.0, rho = 0.5; converged in {} iterations",
        fit.convergence.iterations
    );
}
