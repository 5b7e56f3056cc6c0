//! Communication graphs, mixing matrices and per-round mixing operators.

mod mixing;
mod spectral;
mod topology;

pub use mixing::{
    gap_bound, make_operator, metropolis_weights, momentum, stochastic_deviation, MixingMatrix,
    MixingOperator, Protocol, BOUND_TOL, STOCHASTIC_TOL,
};
pub use spectral::{
    spectral_gap, spectral_gap_eigen, spectral_gap_power, EIGEN_MAX_N, POWER_MAX_ITER, POWER_TOL,
};
pub use topology::{build_topology, random_connected, Topology, TopologyKind};
