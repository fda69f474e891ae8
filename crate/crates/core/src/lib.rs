//! Simulator for topological Thouless pumping of a single spin excitation
//! through arrays of edge-coupled trimerized spin chains.
//!
//! Units: `ħ = J = 1`. Energies are in units of the intra-chain coupling and
//! times in `1/J`.

pub mod config;
pub mod drive;
pub mod evolution;
pub mod experiment;
pub mod expm;
pub mod hamiltonian;
pub mod invariants;
pub mod lattice;

pub use config::{Experiment, ExperimentConfig};
pub use drive::{DisorderRealization, DriveParams, SpatialPeriod};
pub use evolution::{IntegratorConfig, Method, StateVector, Trajectory};
pub use hamiltonian::HamiltonianSnapshot;
pub use invariants::{BlochModel, ChernResult};
pub use lattice::{ArrayTopology, ChainId, ChainSpec, Edge, EdgeCoupling, RegionSpec};
