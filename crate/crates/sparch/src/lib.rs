pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod simulate;
pub mod weights;
