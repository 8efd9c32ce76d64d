use std::collections::BTreeMap;

use super::{FockState, SectorRegistry, C64};
use crate::error::{domain, Result};

/// Amplitudes over a direct sum of number sectors.
///
/// Sectors that are absent hold zero amplitude.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositeState {
    sectors: BTreeMap<usize, Vec<C64>>,
}

impl CompositeState {
    pub fn new() -> Self {
        Self::default()
    }

    /// A single Fock basis state.
    pub fn basis_state(registry: &SectorRegistry, state: &FockState) -> Result<Self> {
        if state.occupations().len() != registry.n_sites() {
            return domain(format!(
                "state has {} sites, lattice has {}",
                state.occupations().len(),
                registry.n_sites()
            ));
        }
        let n = state.total();
        if n > registry.max_particles() {
            return domain(format!("{state} holds more particles than the lattice allows"));
        }
        let basis = registry.basis(n);
        let idx = basis
            .index_of(state)
            .ok_or_else(|| crate::Error::Domain(format!("{state} exceeds the occupancy cutoff")))?;
        let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
        amps[idx] = C64::new(1.0, 0.0);
        let mut out = Self::new();
        out.sectors.insert(n, amps);
        Ok(out)
    }

    /// Empty lattice.
    pub fn vacuum(registry: &SectorRegistry) -> Self {
        let occ = FockState::new(vec![0; registry.n_sites()]);
        Self::basis_state(registry, &occ).expect("vacuum is always valid")
    }

    pub fn from_occupations(registry: &SectorRegistry, occ: &[u8]) -> Result<Self> {
        Self::basis_state(registry, &FockState::new(occ.to_vec()))
    }

    pub fn sector(&self, n: usize) -> Option<&[C64]> {
        self.sectors.get(&n).map(|v| v.as_slice())
    }

    pub fn sector_mut(&mut self, n: usize) -> Option<&mut Vec<C64>> {
        self.sectors.get_mut(&n)
    }

    /// Insert or replace the amplitudes of sector `n`.
    pub fn set_sector(&mut self, n: usize, amps: Vec<C64>) {
        self.sectors.insert(n, amps);
    }

    pub fn remove_sector(&mut self, n: usize) -> Option<Vec<C64>> {
        self.sectors.remove(&n)
    }

    pub fn sectors(&self) -> impl Iterator<Item = (usize, &[C64])> {
        self.sectors.iter().map(|(&n, v)| (n, v.as_slice()))
    }

    pub fn sectors_mut(&mut self) -> impl Iterator<Item = (usize, &mut Vec<C64>)> {
        self.sectors.iter_mut().map(|(&n, v)| (n, v))
    }

    pub fn sector_numbers(&self) -> Vec<usize> {
        self.sectors.keys().copied().collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.sectors
            .values()
            .flat_map(|v| v.iter())
            .map(|a| a.norm_sqr())
            .sum()
    }

    /// Rescale to unit norm. Returns the norm before rescaling.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            for v in self.sectors.values_mut() {
                for a in v.iter_mut() {
                    *a /= norm;
                }
            }
        }
        norm
    }

    pub fn scale(&mut self, factor: C64) {
        for v in self.sectors.values_mut() {
            for a in v.iter_mut() {
                *a *= factor;
            }
        }
    }

    /// Weight carried by each sector.
    pub fn sector_weights(&self) -> BTreeMap<usize, f64> {
        self.sectors
            .iter()
            .map(|(&n, v)| (n, v.iter().map(|a| a.norm_sqr()).sum()))
            .collect()
    }

    /// `Σ_n weight(n) · n`.
    pub fn mean_particle_number(&self) -> f64 {
        self.sector_weights().iter().map(|(&n, w)| n as f64 * w).sum()
    }

    /// `a + coeff · b`, sector by sector.
    pub fn add_scaled(&mut self, coeff: C64, other: &CompositeState) {
        for (&n, v) in &other.sectors {
            let dst = self
                .sectors
                .entry(n)
                .or_insert_with(|| vec![C64::new(0.0, 0.0); v.len()]);
            for (d, s) in dst.iter_mut().zip(v) {
                *d += coeff * s;
            }
        }
    }
}

/// Mean occupation of every site.
pub fn density_expectation(state: &CompositeState, registry: &SectorRegistry) -> Vec<f64> {
    let n_sites = registry.n_sites();
    let mut density = vec![0.0; n_sites];
    for (n, amps) in state.sectors() {
        let sector = registry.sector(n);
        for (k, a) in amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            for (site, d) in density.iter_mut().enumerate() {
                *d += p * sector.occupation(k, site) as f64;
            }
        }
    }
    density
}

/// Probability of each occupancy level on every site: `out[site][level]`.
pub fn site_level_probabilities(state: &CompositeState, registry: &SectorRegistry) -> Vec<Vec<f64>> {
    let levels = registry.lattice().n_max() as usize + 1;
    let mut out = vec![vec![0.0; levels]; registry.n_sites()];
    for (n, amps) in state.sectors() {
        let sector = registry.sector(n);
        for (k, a) in amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            for (site, row) in out.iter_mut().enumerate() {
                row[sector.occupation(k, site) as usize] += p;
            }
        }
    }
    out
}

/// `⟨a|b⟩` over the sectors both states share.
pub fn sector_overlap(a: &CompositeState, b: &CompositeState) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (n, va) in a.sectors() {
        if let Some(vb) = b.sector(n) {
            acc += va.iter().zip(vb).map(|(x, y)| x.conj() * y).sum::<C64>();
        }
    }
    acc
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &CompositeState, b: &CompositeState) -> f64 {
    sector_overlap(a, b).norm_sqr()
}
