//! Profile the spARCH log-likelihood over a grid of (alpha, rho) for a
//! simulated field. The surface is rather flat around the maximum, which
//! is why the fitting routine uses multiple starts.

use sparch::likelihood::{loglik_sparch, Parameters};
use sparch::simulate::{simulate, Family, SimulationSpec};
use sparch::weights::{build_lattice_contiguity, ContiguityScheme, LatticeSpec};

fn main() {
    let w = build_lattice_contiguity(LatticeSpec {
        rows: 15,
        cols: 15,
        scheme: ContiguityScheme::Queen,
    })
    .unwrap()
    .row_standardize();
    let spec = SimulationSpec::new(Family::Esparch, 1.0, 0.5, 99).unwrap();
    let field = simulate(&spec, &w).unwrap();
    let y = field.y_real().unwrap();

    println!("log-likelihood over alpha (rows 0.6..1.8) x rho (cols 0.0..1.0):");
    print!("{:>6}", "");
    for j in 0..=5 {
        print!("{:>10.2}", j as f64 * 0.2);
    }
    println!();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=6 {
        let alpha = 0.6 + 0.2 * i as f64;
        print!("{alpha:>6.2}");
        for j in 0..=5 {
            let rho = j as f64 * 0.2;
            let ll = loglik_sparch(&y, &Parameters::arch(alpha, rho), &w, Family::Esparch)
                .unwrap();
            if ll > best.0 {
                best = (ll, alpha, rho);
            }
            print!("{ll:>10.2}");
        }
        println!();
    }
    println!(
        "grid maximum {:.3} at alpha = {}, rho = {} (truth: 1.0, 0.5)",
        best.0, best.1, best.2
    );
}
