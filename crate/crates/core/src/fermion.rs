//! Free-fermion description of hard-core bosons on an open chain.
//!
//! In the hard-core limit a Bose-Hubbard chain maps onto non-interacting
//! fermions, so densities and band energies follow from single-particle
//! modes. Only diagonal quantities are provided; string operators for
//! off-diagonal correlators are not tracked.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, Result};

/// Tight-binding chain with a uniform hopping `j` and optional on-site
/// energies.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeFermionChain {
    pub n_sites: usize,
    pub j: f64,
    pub detunings: Option<Vec<f64>>,
}

impl FreeFermionChain {
    pub fn uniform(n_sites: usize, j: f64) -> Self {
        Self {
            n_sites,
            j,
            detunings: None,
        }
    }

    pub fn with_detunings(n_sites: usize, j: f64, detunings: Vec<f64>) -> Result<Self> {
        if detunings.len() != n_sites {
            return domain(format!("{} detunings for {n_sites} sites", detunings.len()));
        }
        Ok(Self {
            n_sites,
            j,
            detunings: Some(detunings),
        })
    }

    fn is_uniform(&self) -> bool {
        self.detunings
            .as_ref()
            .is_none_or(|d| d.iter().all(|&x| x == 0.0))
    }
}

/// Single-particle spectrum sorted by energy.
///
/// `labels[k]` names mode `k`: the quasi-momentum index (1-based) for the
/// uniform chain, otherwise the 1-based rank in energy.
#[derive(Debug, Clone)]
pub struct Modes {
    pub energies: Vec<f64>,
    /// `functions[k][i]` is the amplitude of mode `k` on site `i`.
    pub functions: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Modes {
    fn position(&self, label: usize) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| crate::Error::Domain(format!("mode {label} does not exist")))
    }

    /// Energy of the mode with the given label.
    pub fn energy(&self, label: usize) -> Result<f64> {
        Ok(self.energies[self.position(label)?])
    }
}

/// `ε_k = 2J cos(πk/(N+1))`, `φ_k(i) = √(2/(N+1)) sin(πki/(N+1))` for the
/// uniform chain; direct diagonalization otherwise.
pub fn single_particle_modes(chain: &FreeFermionChain) -> Modes {
    let n = chain.n_sites;
    let mut modes: Vec<(f64, Vec<f64>, usize)> = if chain.is_uniform() {
        let norm = (2.0 / (n as f64 + 1.0)).sqrt();
        (1..=n)
            .map(|k| {
                let q = PI * k as f64 / (n as f64 + 1.0);
                let phi = (1..=n).map(|i| norm * (q * i as f64).sin()).collect();
                (2.0 * chain.j * q.cos(), phi, k)
            })
            .collect()
    } else {
        let det = chain.detunings.as_deref().unwrap_or(&[]);
        let h = tight_binding_matrix(n, chain.j, det);
        let eig = SymmetricEigen::new(h);
        (0..n)
            .map(|k| {
                let v = eig.eigenvectors.column(k);
                // Sign convention: first nonzero component positive.
                let sign = v.iter().find(|x| x.abs() > 1e-12).map_or(1.0, |x| x.signum());
                (eig.eigenvalues[k], v.iter().map(|x| x * sign).collect(), 0)
            })
            .collect()
    };
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let uniform = chain.is_uniform();
    let mut out = Modes {
        energies: Vec::with_capacity(n),
        functions: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
    };
    for (rank, (e, phi, k)) in modes.into_iter().enumerate() {
        out.energies.push(e);
        out.functions.push(phi);
        out.labels.push(if uniform { k } else { rank + 1 });
    }
    out
}

/// Dense single-particle Hamiltonian, used as the cross-check for the
/// closed form.
pub fn tight_binding_matrix(n: usize, j: f64, detunings: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            detunings.get(r).copied().unwrap_or(0.0)
        } else if r.abs_diff(c) == 1 {
            j
        } else {
            0.0
        }
    })
}

fn check_distinct(occupied: &[usize]) -> Result<()> {
    let mut seen = occupied.to_vec();
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return domain(format!("mode {} occupied twice", w[0]));
    }
    Ok(())
}

/// `⟨n_i⟩ = Σ_{k∈occ} |φ_k(i)|²`.
pub fn fluid_density(chain: &FreeFermionChain, occupied: &[usize]) -> Result<Vec<f64>> {
    check_distinct(occupied)?;
    let modes = single_particle_modes(chain);
    let mut density = vec![0.0; chain.n_sites];
    for &label in occupied {
        let k = modes.position(label)?;
        for (d, phi) in density.iter_mut().zip(&modes.functions[k]) {
            *d += phi * phi;
        }
    }
    Ok(density)
}

/// Many-body energy of a filled set of modes.
pub fn band_energy(chain: &FreeFermionChain, occupied: &[usize]) -> Result<f64> {
    check_distinct(occupied)?;
    let modes = single_particle_modes(chain);
    occupied.iter().map(|&k| modes.energy(k)).sum()
}

/// Labels of the `m` lowest-energy modes.
pub fn lowest_modes(chain: &FreeFermionChain, m: usize) -> Vec<usize> {
    single_particle_modes(chain).labels.into_iter().take(m).collect()
}

/// Labels of the `m` highest-energy modes.
pub fn highest_modes(chain: &FreeFermionChain, m: usize) -> Vec<usize> {
    let labels = single_particle_modes(chain).labels;
    labels[labels.len().saturating_sub(m)..].to_vec()
}

/// Drive frequency that promotes `from[0] → to[0]` and `from[1] → to[1]`
/// simultaneously. Both single-particle gaps must agree.
pub fn two_phonon_target(chain: &FreeFermionChain, from: [usize; 2], to: [usize; 2]) -> Result<f64> {
    let modes = single_particle_modes(chain);
    let g1 = modes.energy(to[0])? - modes.energy(from[0])?;
    let g2 = modes.energy(to[1])? - modes.energy(from[1])?;
    let tol = 1e-6 * chain.j.abs().max(f64::MIN_POSITIVE);
    if (g1 - g2).abs() > tol {
        return domain(format!(
            "pair gaps differ: {} → {} gives {g1:.6e}, {} → {} gives {g2:.6e}",
            from[0], to[0], from[1], to[1]
        ));
    }
    Ok(0.5 * (g1 + g2))
}
