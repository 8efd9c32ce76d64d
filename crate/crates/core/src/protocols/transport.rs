//! Ancilla-conditioned transport into the transistor configuration.

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::fock::{density_expectation, FockState};
use crate::propagator::{eigensolve_sector, track_eigenstate};

use super::config::{AncillaPrep, ExperimentConfig};
use super::device::Device;
use super::phonon::transistor_state;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProfile {
    pub ancilla: AncillaPrep,
    pub density: Vec<f64>,
    pub total: f64,
    /// `|⟨loaded product state|ψ⟩|²`, the localization measure for the
    /// solid branch.
    pub loaded_overlap: f64,
    /// Fluid branch only: overlap with the transistor eigenstate reached by continuously
    /// following, along the ramp path, the eigenstate that best matches the
    /// loaded product state in the small stagger. Not defined for the
    /// solid branch: with the ancilla blocking, configurations on either
    /// side are nearly degenerate and the exact eigenstates straddle the
    /// ancilla, which no finite ramp follows.
    pub adiabatic_fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult {
    pub profiles: Vec<TransportProfile>,
    pub warnings: Vec<String>,
}

/// Snapshots used to follow the target eigenstate along the ramp.
const TRACK_STEPS: usize = 400;

fn loaded_state(device: &Device, ancilla: AncillaPrep) -> FockState {
    let mut occ = vec![0u8; device.n_sites()];
    device.loaded.iter().for_each(|&s| occ[s] = 1);
    if ancilla == AncillaPrep::Excited {
        occ[device.ancilla] = 1;
    }
    FockState::new(occ)
}

pub fn transport_profile(device: &Device, ancilla: AncillaPrep, t_ramp: f64) -> Result<TransportProfile> {
    let reg = device.registry();
    let psi = transistor_state(device, ancilla, t_ramp)?;
    let density = density_expectation(&psi, reg);
    let total = density.iter().sum();

    let start = loaded_state(device, ancilla);
    let n = start.total();
    let basis = reg.basis(n);
    let amps = psi.sector(n).expect("sector populated by the ramp");
    let idx = basis.index_of(&start).expect("loaded state is in its sector");
    let loaded_overlap = amps[idx].norm_sqr();
    if ancilla != AncillaPrep::Excited {
        return Ok(TransportProfile {
            ancilla,
            density,
            total,
            loaded_overlap,
            adiabatic_fidelity: None,
        });
    }
    let mut x = vec![C64::new(0.0, 0.0); basis.dim()];
    x[idx] = C64::new(1.0, 0.0);
    let sector = reg.sector(n);
    let start_index = eigensolve_sector(&sector.sparse(&device.small)?)?.max_overlap_index(&x);
    let path = (0..=TRACK_STEPS)
        .map(|k| {
            let s = k as f64 / TRACK_STEPS as f64;
            let d: Vec<f64> = device
                .small
                .iter()
                .zip(&device.transistor)
                .map(|(a, b)| a + (b - a) * s)
                .collect();
            sector.sparse(&d)
        })
        .collect::<Result<Vec<_>>>()?;
    let target = track_eigenstate(&path, start_index)?;
    let overlap: C64 = target.vector.iter().zip(amps).map(|(v, a)| v.conj() * a).sum();
    Ok(TransportProfile {
        ancilla,
        density,
        total,
        loaded_overlap,
        adiabatic_fidelity: Some(overlap.norm_sqr()),
    })
}

/// Profiles for the configured ancilla state, or for both basis states
/// when the configuration asks for a superposition.
pub fn run_conditional_transport(cfg: &ExperimentConfig) -> Result<TransportResult> {
    let device = Device::from_config(cfg)?;
    let preps = match cfg.protocol.ancilla {
        AncillaPrep::Superposition => vec![AncillaPrep::Ground, AncillaPrep::Excited],
        one => vec![one],
    };
    let mut warnings = Vec::new();
    let profiles = preps
        .into_iter()
        .map(|prep| transport_profile(&device, prep, device.t_ramp))
        .collect::<Result<Vec<_>>>()?;
    for p in &profiles {
        if let Some(f) = p.adiabatic_fidelity.filter(|f| *f < cfg.protocol.fidelity_floor) {
            warnings.push(format!(
                "fluid branch: adiabatic fidelity {f:.4} below floor {:.4}",
                cfg.protocol.fidelity_floor
            ));
        }
    }
    Ok(TransportResult { profiles, warnings })
}
