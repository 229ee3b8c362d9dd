//! Shared workloads for the criterion benches.

use nalgebra::DMatrix;
use relaxed_portfolio::simulation::{generate, DgpKind, DgpSpec};
use relaxed_portfolio::ReturnPanel;

/// Sparse-Cholesky panel of the given shape, fixed seed.
pub fn panel(p: usize, n: usize) -> ReturnPanel {
    generate(&DgpSpec::new(DgpKind::SparseCholesky, p, n), 42)
        .expect("sparse Cholesky generation")
        .0
}

/// Centered copy of the panel data.
pub fn centered(p: usize, n: usize) -> DMatrix<f64> {
    panel(p, n).centered()
}
