//! Simulation and analysis toolkit for ancilla-controlled Bose-Hubbard
//! lattices of superconducting qubits.
//!
//! The crate covers the full chain from lattice Hamiltonians to the numbers
//! an experiment reports:
//!
//! * [`fock`]: number-conserving Fock bases, Hamiltonians, observables.
//! * [`propagator`]: time evolution under sampled controls, eigen-analysis.
//! * [`schedule`]: pulse programs (ramps, holds, modulation, rotations).
//! * [`control_cal`]: flux crosstalk and dispersion calibration math.
//! * [`noise`]: trajectory decay/dephasing, quasi-static noise, readout.
//! * [`fermion`]: hard-core boson / free-fermion oracle.
//! * [`protocols`]: end-to-end experiments built from the pieces above.
//! * [`analysis`]: fringe spectra, peak finding, decay fits.

pub mod analysis;
pub mod control_cal;
pub mod error;
pub mod fermion;
pub mod fock;
pub mod noise;
pub mod propagator;
pub mod protocols;
pub mod schedule;
pub mod units;

pub use error::{Error, Result};

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
