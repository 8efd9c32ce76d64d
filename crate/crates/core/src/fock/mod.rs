//! Truncated bosonic Fock spaces on an open chain.
//!
//! Particle number is conserved by the lattice Hamiltonian, so states are
//! stored per number sector. Microwave rotations are the only operations that
//! move amplitude between sectors.

mod basis;
mod hamiltonian;
mod lattice;
mod operator;
mod state;

pub use basis::{enumerate_sector, FockState, SectorBasis};
pub use hamiltonian::{build_hamiltonian, Sector, SectorHamiltonian, SectorRegistry};
pub use lattice::LatticeSpec;
pub use operator::{LinearOperator, SparseOperator, C64};
pub use state::{
    density_expectation, fidelity, sector_overlap, site_level_probabilities, CompositeState,
};
