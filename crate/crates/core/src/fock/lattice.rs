use crate::error::{domain, Result};

/// Open 1D chain of truncated bosonic sites.
///
/// `j_bonds[i]` couples sites `i` and `i + 1`. Rates are angular (rad/s) and
/// keep their physical sign; nothing is taken in absolute value.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    n_sites: usize,
    j_bonds: Vec<f64>,
    u_sites: Vec<f64>,
    n_max: u8,
}

impl LatticeSpec {
    pub fn new(j_bonds: Vec<f64>, u_sites: Vec<f64>, n_max: u8) -> Result<Self> {
        let n_sites = u_sites.len();
        if n_sites < 2 {
            return domain(format!("need at least 2 sites, got {n_sites}"));
        }
        if j_bonds.len() != n_sites - 1 {
            return domain(format!(
                "{} bonds given for {} sites (expected {})",
                j_bonds.len(),
                n_sites,
                n_sites - 1
            ));
        }
        if n_max < 1 {
            return domain("occupancy cutoff must be at least 1");
        }
        if j_bonds.iter().chain(&u_sites).any(|x| !x.is_finite()) {
            return domain("tunneling and interaction rates must be finite");
        }
        Ok(Self {
            n_sites,
            j_bonds,
            u_sites,
            n_max,
        })
    }

    /// Uniform chain with the same `j` on every bond and `u` on every site.
    pub fn uniform(n_sites: usize, j: f64, u: f64, n_max: u8) -> Result<Self> {
        if n_sites < 2 {
            return domain(format!("need at least 2 sites, got {n_sites}"));
        }
        Self::new(vec![j; n_sites - 1], vec![u; n_sites], n_max)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_max(&self) -> u8 {
        self.n_max
    }

    pub fn j_bonds(&self) -> &[f64] {
        &self.j_bonds
    }

    pub fn u_sites(&self) -> &[f64] {
        &self.u_sites
    }

    /// Largest particle number the truncated space can hold.
    pub fn max_particles(&self) -> usize {
        self.n_sites * self.n_max as usize
    }

    /// Mean absolute tunneling rate, used as the natural energy scale.
    pub fn j_scale(&self) -> f64 {
        self.j_bonds.iter().map(|j| j.abs()).sum::<f64>() / self.j_bonds.len() as f64
    }
}
