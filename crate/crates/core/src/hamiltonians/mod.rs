//! Hamiltonians from a closed term algebra, the level-set lift of graph
//! Hamiltonians, gradient shifts, and sampled checks of the structure
//! conditions.

mod assumptions;
mod coeff;
mod spec;

pub use assumptions::{estimate_constants, oscillation_bound_k, AssumptionReport, ProbeConfig};
pub use coeff::{CoeffField, Mode};
pub(crate) use coeff::SampledCoeff;
pub(crate) use spec::pow_norm;
pub use spec::{lift, DriftShape, GraphSpec, HamiltonianSpec, Shift, Term};
