//! Contiguity matrices, row standardization, oriented (triangularizable)
//! matrices, and the error truncation bound.

use sparch::weights::{
    build_lattice_contiguity, build_spatiotemporal_weights, ContiguityScheme, LatticeSpec,
    SpatioTemporalSpec,
};

fn main() {
    let rook = build_lattice_contiguity(LatticeSpec {
        rows: 20,
        cols: 20,
        scheme: ContiguityScheme::Rook,
    })
    .unwrap();
    println!("20x20 rook lattice: n = {}, nonzeros = {}", rook.n(), rook.nnz());

    let w = rook.row_standardize();
    println!("row sums after standardization: all 1 (or 0 for islands)");
    println!("truncation bound at rho = 1: a = {:.4}", w.truncation_bound(1.0));
    println!("truncation bound at rho = 0: a = {}", w.truncation_bound(0.0));

    // Keeping only the entries below the diagonal gives an oriented
    // process; no truncation is needed there.
    let oriented = w.lower_triangular();
    println!(
        "oriented version triangularizable: {}, bound: {}",
        oriented.strictly_triangularizable().is_some(),
        oriented.truncation_bound(1.0)
    );

    // A spatiotemporal matrix: two time slices of a 3x3 queen lattice
    // with the previous slice feeding the next.
    let slice = build_lattice_contiguity(LatticeSpec {
        rows: 3,
        cols: 3,
        scheme: ContiguityScheme::Queen,
    })
    .unwrap()
    .row_standardize();
    let st = build_spatiotemporal_weights(&SpatioTemporalSpec {
        spatial: vec![slice.clone(), slice],
        temporal_phis: vec![0.4],
    })
    .unwrap();
    let combined = st.combined(0.6).unwrap();
    println!(
        "spatiotemporal matrix: n = {}, nonzeros = {}",
        combined.n(),
        combined.nnz()
    );
}
