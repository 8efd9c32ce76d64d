use super::{enumerate_sector, LatticeSpec, LinearOperator, SectorBasis, SparseOperator, C64};
use crate::error::{domain, Result};

/// Bose-Hubbard Hamiltonian restricted to one number sector, in the frame
/// rotating at the lattice frequency:
/// `H = Σ J (a†_i a_{i+1} + h.c.) + Σ U/2 n_i (n_i − 1) + Σ δ_i n_i`.
pub fn build_hamiltonian(
    lattice: &LatticeSpec,
    detunings: &[f64],
    basis: &SectorBasis,
) -> Result<SparseOperator> {
    if detunings.len() != lattice.n_sites() {
        return domain(format!(
            "{} detunings for {} sites",
            detunings.len(),
            lattice.n_sites()
        ));
    }
    if basis.lattice().n_sites() != lattice.n_sites() || basis.lattice().n_max() != lattice.n_max() {
        return domain("basis was built for a different lattice");
    }
    let mut entries: Vec<(usize, usize, C64)> = hopping_entries(lattice, basis)
        .into_iter()
        .map(|(r, c, v)| (r, c, C64::new(v, 0.0)))
        .collect();
    for (k, state) in basis.states().iter().enumerate() {
        let d = onsite_energy(lattice, state.occupations()) + detuning_energy(detunings, state.occupations());
        entries.push((k, k, C64::new(d, 0.0)));
    }
    SparseOperator::from_triplets(basis.dim(), entries)
}

fn onsite_energy(lattice: &LatticeSpec, occ: &[u8]) -> f64 {
    occ.iter()
        .zip(lattice.u_sites())
        .map(|(&n, &u)| {
            let n = n as f64;
            0.5 * u * n * (n - 1.0)
        })
        .sum()
}

fn detuning_energy(detunings: &[f64], occ: &[u8]) -> f64 {
    occ.iter().zip(detunings).map(|(&n, &d)| d * n as f64).sum()
}

// Real hopping matrix elements, both directions of every bond.
fn hopping_entries(lattice: &LatticeSpec, basis: &SectorBasis) -> Vec<(usize, usize, f64)> {
    let n_max = lattice.n_max();
    let mut out = Vec::new();
    for (col, state) in basis.states().iter().enumerate() {
        for (i, &j) in lattice.j_bonds().iter().enumerate() {
            let (ni, nj) = (state.get(i), state.get(i + 1));
            // a†_i a_{i+1}
            if nj > 0 && ni < n_max {
                let target = state.with(i, ni + 1).with(i + 1, nj - 1);
                let row = basis.index_of(&target).expect("hop stays in sector");
                out.push((row, col, j * (((ni as f64) + 1.0) * nj as f64).sqrt()));
            }
            // a†_{i+1} a_i
            if ni > 0 && nj < n_max {
                let target = state.with(i, ni - 1).with(i + 1, nj + 1);
                let row = basis.index_of(&target).expect("hop stays in sector");
                out.push((row, col, j * (((nj as f64) + 1.0) * ni as f64).sqrt()));
            }
        }
    }
    out
}

/// One number sector with everything needed to rebuild its Hamiltonian
/// cheaply for new detunings.
#[derive(Debug, Clone)]
pub struct Sector {
    basis: SectorBasis,
    hop_ptr: Vec<usize>,
    hop_cols: Vec<usize>,
    hop_vals: Vec<f64>,
    interaction: Vec<f64>,
    occupations: Vec<u8>,
}

impl Sector {
    pub fn new(lattice: &LatticeSpec, n_total: usize) -> Result<Self> {
        let basis = enumerate_sector(lattice, n_total)?;
        let dim = basis.dim();
        let mut hops = hopping_entries(lattice, &basis);
        hops.sort_by_key(|&(r, c, _)| (r, c));
        let mut hop_ptr = vec![0usize; dim + 1];
        let mut hop_cols = Vec::with_capacity(hops.len());
        let mut hop_vals = Vec::with_capacity(hops.len());
        for (r, c, v) in hops {
            hop_ptr[r + 1] += 1;
            hop_cols.push(c);
            hop_vals.push(v);
        }
        for r in 0..dim {
            hop_ptr[r + 1] += hop_ptr[r];
        }
        let interaction = basis
            .states()
            .iter()
            .map(|s| onsite_energy(lattice, s.occupations()))
            .collect();
        let occupations = basis
            .states()
            .iter()
            .flat_map(|s| s.occupations().iter().copied())
            .collect();
        Ok(Self {
            basis,
            hop_ptr,
            hop_cols,
            hop_vals,
            interaction,
            occupations,
        })
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_total(&self) -> usize {
        self.basis.n_total()
    }

    pub fn n_sites(&self) -> usize {
        self.basis.lattice().n_sites()
    }

    /// Occupation of `site` in basis state `k`.
    pub fn occupation(&self, k: usize, site: usize) -> u8 {
        self.occupations[k * self.n_sites() + site]
    }

    /// Occupation vector of basis state `k`.
    pub fn occupations_of(&self, k: usize) -> &[u8] {
        let n = self.n_sites();
        &self.occupations[k * n..(k + 1) * n]
    }

    /// Diagonal of H for the given detunings, written into `out`.
    pub fn diagonal_into(&self, detunings: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.dim()).map(|k| {
            self.interaction[k] + detuning_energy(detunings, self.occupations_of(k))
        }));
    }

    pub fn hamiltonian(&self, detunings: &[f64]) -> SectorHamiltonian<'_> {
        let mut diag = Vec::with_capacity(self.dim());
        self.diagonal_into(detunings, &mut diag);
        SectorHamiltonian { sector: self, diag }
    }

    pub fn sparse(&self, detunings: &[f64]) -> Result<SparseOperator> {
        build_hamiltonian(self.basis.lattice(), detunings, &self.basis)
    }

    /// `y = H_hop x + diag ∘ x` for a caller-supplied diagonal.
    pub fn apply_with_diagonal(&self, diag: &[f64], x: &[C64], y: &mut [C64]) {
        for r in 0..self.dim() {
            let mut acc = x[r] * diag[r];
            for k in self.hop_ptr[r]..self.hop_ptr[r + 1] {
                acc += x[self.hop_cols[k]] * self.hop_vals[k];
            }
            y[r] = acc;
        }
    }

    /// Dense hopping part of the Hamiltonian (no diagonal).
    pub fn dense_hopping(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim(), self.dim());
        for r in 0..self.dim() {
            for k in self.hop_ptr[r]..self.hop_ptr[r + 1] {
                m[(r, self.hop_cols[k])] = self.hop_vals[k];
            }
        }
        m
    }

    pub(crate) fn hop_radius(&self, r: usize) -> f64 {
        self.hop_vals[self.hop_ptr[r]..self.hop_ptr[r + 1]]
            .iter()
            .map(|v| v.abs())
            .sum()
    }
}

/// A sector Hamiltonian for a fixed detuning snapshot.
#[derive(Debug, Clone)]
pub struct SectorHamiltonian<'a> {
    sector: &'a Sector,
    diag: Vec<f64>,
}

impl<'a> SectorHamiltonian<'a> {
    pub fn from_diagonal(sector: &'a Sector, diag: Vec<f64>) -> Self {
        Self { sector, diag }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn into_diagonal(self) -> Vec<f64> {
        self.diag
    }
}

impl LinearOperator for SectorHamiltonian<'_> {
    fn dim(&self) -> usize {
        self.sector.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.sector.apply_with_diagonal(&self.diag, x, y);
    }

    fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (r, &d) in self.diag.iter().enumerate() {
            let radius = self.sector.hop_radius(r);
            lo = lo.min(d - radius);
            hi = hi.max(d + radius);
        }
        if self.diag.is_empty() {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }
}

/// Every number sector of a lattice, built once and shared read-only.
#[derive(Debug, Clone)]
pub struct SectorRegistry {
    lattice: LatticeSpec,
    sectors: Vec<Sector>,
}

impl SectorRegistry {
    pub fn new(lattice: LatticeSpec) -> Result<Self> {
        let sectors = (0..=lattice.max_particles())
            .map(|n| Sector::new(&lattice, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lattice, sectors })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn sector(&self, n_total: usize) -> &Sector {
        &self.sectors[n_total]
    }

    pub fn basis(&self, n_total: usize) -> &SectorBasis {
        self.sectors[n_total].basis()
    }

    pub fn max_particles(&self) -> usize {
        self.lattice.max_particles()
    }
}
