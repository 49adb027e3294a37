//! Fixtures shared by the benchmarks.

use sparse_debias::{CovarianceModel, Dataset, SimulationSpec};

/// A simulated dataset with circulant(0.8) design and `s0 = p / 20` signals.
pub fn fixture(n: usize, p: usize, seed: u64) -> Dataset {
    let spec = SimulationSpec {
        covariance: CovarianceModel::circulant(0.8, p),
        n,
        s0: (p / 20).max(1),
        amplitude: 0.5,
        sigma: 1.0,
    };
    spec.simulate(seed).expect("valid fixture")
}
