use std::collections::HashMap;
use std::fmt;

use super::LatticeSpec;
use crate::error::{domain, Result};

/// Occupation numbers of every site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState {
    occupations: Vec<u8>,
}

impl FockState {
    pub fn new(occupations: Vec<u8>) -> Self {
        Self { occupations }
    }

    pub fn occupations(&self) -> &[u8] {
        &self.occupations
    }

    pub fn total(&self) -> usize {
        self.occupations.iter().map(|&n| n as usize).sum()
    }

    pub fn get(&self, site: usize) -> u8 {
        self.occupations[site]
    }

    pub(crate) fn with(&self, site: usize, n: u8) -> FockState {
        let mut occ = self.occupations.clone();
        occ[site] = n;
        FockState { occupations: occ }
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for n in &self.occupations {
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

/// All Fock states with a fixed total particle number, in lexicographic order.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    lattice: LatticeSpec,
    n_total: usize,
    states: Vec<FockState>,
    index: HashMap<FockState, usize>,
}

impl SectorBasis {
    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &FockState {
        &self.states[i]
    }

    pub fn index_of(&self, state: &FockState) -> Option<usize> {
        self.index.get(state).copied()
    }
}

/// Enumerate the sector with `n_total` particles.
pub fn enumerate_sector(lattice: &LatticeSpec, n_total: usize) -> Result<SectorBasis> {
    if n_total > lattice.max_particles() {
        return domain(format!(
            "particle number {n_total} outside [0, {}]",
            lattice.max_particles()
        ));
    }
    let n_sites = lattice.n_sites();
    let n_max = lattice.n_max() as usize;
    let mut states = Vec::new();
    let mut occ = vec![0u8; n_sites];
    fill(0, n_total, n_max, &mut occ, &mut states);
    let index = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    Ok(SectorBasis {
        lattice: lattice.clone(),
        n_total,
        states,
        index,
    })
}

// Depth-first over sites with ascending occupation yields lexicographic order.
fn fill(site: usize, remaining: usize, n_max: usize, occ: &mut Vec<u8>, out: &mut Vec<FockState>) {
    let n_sites = occ.len();
    if site == n_sites {
        if remaining == 0 {
            out.push(FockState::new(occ.clone()));
        }
        return;
    }
    let capacity_after = (n_sites - site - 1) * n_max;
    let lo = remaining.saturating_sub(capacity_after);
    let hi = remaining.min(n_max);
    for n in lo..=hi {
        occ[site] = n as u8;
        fill(site + 1, remaining - n, n_max, occ, out);
    }
    occ[site] = 0;
}
