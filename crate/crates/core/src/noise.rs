//! Stochastic decay and dephasing by Monte-Carlo wavefunction trajectories,
//! quasi-static detuning noise and projective readout with confusion.
//!
//! Jump operators per site are `√(1/T1)·a` and `√(2/Tφ)·n` with
//! `1/Tφ = 1/T2 − 1/(2T1)`. The non-Hermitian part of the effective
//! Hamiltonian is diagonal in the Fock basis, so each piece is applied as
//! damping half-step, unitary step, damping half-step.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::fock::{CompositeState, SectorRegistry, C64};
use crate::propagator::{apply_event, check_controls, evolve_sampled_observed, SectorEngine, StepPolicy};
use crate::schedule::SampledControls;

/// Per-site coherence and low-frequency noise parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Energy relaxation times (s); `f64::INFINITY` disables decay.
    pub t1: Vec<f64>,
    /// Coherence times (s); must not exceed `2·T1`.
    pub t2: Vec<f64>,
    /// Standard deviation of the per-shot detuning offset (rad/s).
    pub sigma: Vec<f64>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless(n_sites: usize, seed: u64) -> Self {
        Self {
            t1: vec![f64::INFINITY; n_sites],
            t2: vec![f64::INFINITY; n_sites],
            sigma: vec![0.0; n_sites],
            seed,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.t1.len()
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [("T1", &self.t1), ("T2", &self.t2), ("sigma", &self.sigma)] {
            if v.len() != n_sites {
                errs.push(format!("{name} has {} entries for {n_sites} sites", v.len()));
            }
        }
        for (i, (&t1, &t2)) in self.t1.iter().zip(&self.t2).enumerate() {
            if !(t1 > 0.0) {
                errs.push(format!("site {i}: T1 must be positive"));
            }
            if !(t2 > 0.0) || t2 > 2.0 * t1 * (1.0 + 1e-12) {
                errs.push(format!("site {i}: T2 = {t2:e} must lie in (0, 2·T1]"));
            }
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            errs.push("sigma must be finite and non-negative".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn decay_rate(&self, site: usize) -> f64 {
        1.0 / self.t1[site]
    }

    /// `1/Tφ = 1/T2 − 1/(2T1)`, clamped at zero against rounding.
    pub fn dephasing_rate(&self, site: usize) -> f64 {
        (1.0 / self.t2[site] - 0.5 / self.t1[site]).max(0.0)
    }

    pub fn is_dissipative(&self) -> bool {
        (0..self.n_sites()).any(|i| self.decay_rate(i) > 0.0 || self.dephasing_rate(i) > 0.0)
    }
}

/// Independent stream for one trajectory, reproducible regardless of the
/// order trajectories run in.
pub fn trajectory_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Zero-mean Gaussian detuning offsets, one per site, held for a whole shot.
pub fn sample_quasistatic<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> Vec<f64> {
    model
        .sigma
        .iter()
        .map(|&s| {
            let z: f64 = rng.sample(StandardNormal);
            s * z
        })
        .collect()
}

struct JumpChannels<'a> {
    registry: &'a SectorRegistry,
    gamma1: Vec<f64>,
    gamma_phi: Vec<f64>,
    damping: HashMap<usize, Vec<f64>>,
}

impl<'a> JumpChannels<'a> {
    fn new(model: &NoiseModel, registry: &'a SectorRegistry) -> Self {
        let n = registry.n_sites();
        Self {
            registry,
            gamma1: (0..n).map(|i| model.decay_rate(i)).collect(),
            gamma_phi: (0..n).map(|i| model.dephasing_rate(i)).collect(),
            damping: HashMap::new(),
        }
    }

    /// `Σ_c L_c†L_c` on the diagonal of sector `n`.
    fn damping(&mut self, n: usize) -> &[f64] {
        let (g1, gp, registry) = (&self.gamma1, &self.gamma_phi, self.registry);
        self.damping.entry(n).or_insert_with(|| {
            let sector = registry.sector(n);
            (0..sector.dim())
                .map(|k| {
                    sector
                        .occupations_of(k)
                        .iter()
                        .enumerate()
                        .map(|(i, &m)| {
                            let m = m as f64;
                            g1[i] * m + 2.0 * gp[i] * m * m
                        })
                        .sum()
                })
                .collect()
        })
    }

    fn damp(&mut self, psi: &mut CompositeState, t: f64) {
        for n in psi.sector_numbers() {
            let d = self.damping(n).to_vec();
            let amps = psi.sector_mut(n).expect("sector listed");
            for (a, g) in amps.iter_mut().zip(&d) {
                *a *= (-0.5 * g * t).exp();
            }
        }
    }

    fn jump<R: Rng + ?Sized>(&self, psi: &CompositeState, rng: &mut R) -> CompositeState {
        // Weight of every channel: (site, is_decay, weight).
        let n_sites = self.registry.n_sites();
        let mut weights = vec![0.0; 2 * n_sites];
        for (n, amps) in psi.sectors() {
            let sector = self.registry.sector(n);
            for (k, a) in amps.iter().enumerate() {
                let p = a.norm_sqr();
                if p == 0.0 {
                    continue;
                }
                for (i, &m) in sector.occupations_of(k).iter().enumerate() {
                    let m = m as f64;
                    weights[2 * i] += self.gamma1[i] * m * p;
                    weights[2 * i + 1] += 2.0 * self.gamma_phi[i] * m * m * p;
                }
            }
        }
        let total: f64 = weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut channel = weights.len() - 1;
        for (c, w) in weights.iter().enumerate() {
            if r < *w {
                channel = c;
                break;
            }
            r -= w;
        }
        let site = channel / 2;
        let mut out = CompositeState::new();
        if channel % 2 == 0 {
            for (n, amps) in psi.sectors() {
                if n == 0 {
                    continue;
                }
                let (from, to) = (self.registry.basis(n), self.registry.basis(n - 1));
                let mut dst = vec![C64::new(0.0, 0.0); to.dim()];
                for (k, fs) in from.states().iter().enumerate() {
                    let m = fs.get(site);
                    if m == 0 {
                        continue;
                    }
                    let j = to.index_of(&fs.with(site, m - 1)).expect("lowered state exists");
                    dst[j] += amps[k] * (m as f64).sqrt();
                }
                out.set_sector(n - 1, dst);
            }
        } else {
            for (n, amps) in psi.sectors() {
                let sector = self.registry.sector(n);
                let dst = amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * sector.occupation(k, site) as f64)
                    .collect();
                out.set_sector(n, dst);
            }
        }
        out.normalize();
        out
    }
}

/// One stochastic trajectory. Draws the quasi-static offsets first, then the
/// jump randomness, all from `rng`.
pub fn evolve_trajectory<R: Rng + ?Sized>(
    state: &CompositeState,
    controls: &SampledControls,
    registry: &SectorRegistry,
    model: &NoiseModel,
    rng: &mut R,
    policy: &StepPolicy,
) -> Result<CompositeState> {
    evolve_trajectory_observed(state, controls, registry, model, rng, policy, &mut |_, _| {})
}

/// As [`evolve_trajectory`], passing the normalized state at every marker.
pub fn evolve_trajectory_observed<R: Rng + ?Sized>(
    state: &CompositeState,
    controls: &SampledControls,
    registry: &SectorRegistry,
    model: &NoiseModel,
    rng: &mut R,
    policy: &StepPolicy,
    observer: &mut dyn FnMut(&str, &CompositeState),
) -> Result<CompositeState> {
    model.validate(registry.n_sites())?;
    policy.validate()?;
    check_controls(controls, registry)?;
    let offsets = sample_quasistatic(model, rng);
    let controls = controls.with_offsets(&offsets);
    if !model.is_dissipative() {
        return evolve_sampled_observed(state, &controls, registry, policy, observer);
    }

    let mut channels = JumpChannels::new(model, registry);
    let mut engine = SectorEngine::new(registry, policy);
    let mut psi = state.clone();
    psi.normalize();
    let mut threshold: f64 = rng.random();
    let events = controls.events();
    let n = controls.n_samples();
    let dt = controls.dt();
    let mut observe = |label: &str, psi: &CompositeState| {
        let mut copy = psi.clone();
        copy.normalize();
        observer(label, &copy);
    };
    let (mut ev, mut k) = (0, 0);
    loop {
        while ev < events.len() && events[ev].0 == k {
            if let Some(next) = apply_event(&psi, &events[ev].1, registry, policy, &mut observe)? {
                psi = next;
            }
            ev += 1;
        }
        if k >= n {
            break;
        }
        let next_event = events.get(ev).map_or(usize::MAX, |e| e.0);
        let mut k2 = k + 1;
        while k2 < n && k2 < next_event && controls.sample(k2) == controls.sample(k) {
            k2 += 1;
        }
        let detunings = controls.sample(k);
        let mut remaining = (k2 - k) as f64 * dt;
        while remaining > 0.0 {
            let tau = remaining.min(policy.max_step.max(dt));
            remaining -= tau;
            if remaining < 1e-6 * dt {
                remaining = 0.0;
            }
            channels.damp(&mut psi, 0.5 * tau);
            engine.evolve_constant(&mut psi, detunings, tau)?;
            channels.damp(&mut psi, 0.5 * tau);
            if psi.norm_sqr() <= threshold {
                psi = channels.jump(&psi, rng);
                threshold = rng.random();
            }
        }
        k = k2;
    }
    psi.normalize();
    Ok(psi)
}

/// Per-site confusion matrices: rows are true levels, columns reported.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    confusion: Vec<DMatrix<f64>>,
}

impl ReadoutModel {
    pub fn new(confusion: Vec<DMatrix<f64>>) -> Result<Self> {
        for (i, c) in confusion.iter().enumerate() {
            if !c.is_square() || c.nrows() < 2 {
                return domain(format!("site {i}: confusion matrix must be square with ≥ 2 levels"));
            }
            if c.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return domain(format!("site {i}: confusion entries must lie in [0, 1]"));
            }
            for r in 0..c.nrows() {
                let s: f64 = c.row(r).iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return domain(format!("site {i}: row {r} sums to {s}"));
                }
            }
        }
        Ok(Self { confusion })
    }

    /// Perfect readout of `levels` levels on every site.
    pub fn ideal(n_sites: usize, levels: usize) -> Self {
        Self {
            confusion: vec![DMatrix::identity(levels, levels); n_sites],
        }
    }

    /// Diagonal `F_i`, off-diagonal `(1 − F_i)/(levels − 1)`.
    pub fn symmetric(fidelities: &[f64], levels: usize) -> Result<Self> {
        let mats = fidelities
            .iter()
            .map(|&f| {
                let off = (1.0 - f) / (levels - 1) as f64;
                DMatrix::from_fn(levels, levels, |r, c| if r == c { f } else { off })
            })
            .collect();
        Self::new(mats)
    }

    pub fn n_sites(&self) -> usize {
        self.confusion.len()
    }

    pub fn confusion(&self, site: usize) -> &DMatrix<f64> {
        &self.confusion[site]
    }

    fn check_levels(&self, registry: &SectorRegistry) -> Result<()> {
        let levels = registry.lattice().n_max() as usize + 1;
        if self.confusion.len() != registry.n_sites() {
            return domain(format!(
                "readout covers {} sites, lattice has {}",
                self.confusion.len(),
                registry.n_sites()
            ));
        }
        if self.confusion.iter().any(|c| c.nrows() < levels) {
            return domain(format!("confusion matrices must cover {levels} levels"));
        }
        Ok(())
    }
}

/// Draw a Fock state by the Born rule.
pub fn born_sample<R: Rng + ?Sized>(state: &CompositeState, registry: &SectorRegistry, rng: &mut R) -> Vec<u8> {
    let total = state.norm_sqr();
    let mut r = rng.random::<f64>() * total;
    let mut last = None;
    for (n, amps) in state.sectors() {
        for (k, a) in amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                last = Some((n, k));
            }
            if r < p {
                return registry.sector(n).occupations_of(k).to_vec();
            }
            r -= p;
        }
    }
    let (n, k) = last.unwrap_or((0, 0));
    registry.sector(n).occupations_of(k).to_vec()
}

/// One projective measurement of every site followed by readout confusion.
pub fn measure_occupations<R: Rng + ?Sized>(
    state: &CompositeState,
    registry: &SectorRegistry,
    readout: &ReadoutModel,
    rng: &mut R,
) -> Result<Vec<u8>> {
    readout.check_levels(registry)?;
    let truth = born_sample(state, registry, rng);
    Ok(truth
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let c = &readout.confusion[i];
            let mut r = rng.random::<f64>();
            let mut out = c.ncols() - 1;
            for col in 0..c.ncols() {
                let p = c[(m as usize, col)];
                if r < p {
                    out = col;
                    break;
                }
                r -= p;
            }
            out as u8
        })
        .collect())
}

/// Probability that every `(site, level)` in `reported` is what the readout
/// shows, marginalizing over the rest.
pub fn reported_probability(
    state: &CompositeState,
    registry: &SectorRegistry,
    readout: &ReadoutModel,
    reported: &[(usize, u8)],
) -> Result<f64> {
    readout.check_levels(registry)?;
    let mut total = 0.0;
    for (n, amps) in state.sectors() {
        let sector = registry.sector(n);
        for (k, a) in amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let occ = sector.occupations_of(k);
            let q: f64 = reported
                .iter()
                .map(|&(site, level)| readout.confusion[site][(occ[site] as usize, level as usize)])
                .product();
            total += p * q;
        }
    }
    Ok(total / state.norm_sqr())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedPopulations {
    /// `populations[site][level]`.
    pub populations: Vec<Vec<f64>>,
    /// Some estimate fell outside [0, 1] through sampling noise.
    pub out_of_range: bool,
}

/// Undo readout confusion: reported `r = Cᵀ p`, so `p = (Cᵀ)⁻¹ r` per site.
pub fn correct_populations(raw: &[Vec<f64>], readout: &ReadoutModel) -> Result<CorrectedPopulations> {
    if raw.len() != readout.n_sites() {
        return domain(format!("{} histograms for {} sites", raw.len(), readout.n_sites()));
    }
    let mut populations = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let c = &readout.confusion[i];
        if r.len() != c.nrows() {
            return domain(format!("site {i}: histogram has {} levels, readout {}", r.len(), c.nrows()));
        }
        let ct = c.transpose();
        let p = ct
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(r))
            .ok_or_else(|| Error::Numeric(format!("site {i}: confusion matrix is singular")))?;
        populations.push(p.iter().copied().collect::<Vec<f64>>());
    }
    let out_of_range = populations
        .iter()
        .flatten()
        .any(|p| *p < -1e-12 || *p > 1.0 + 1e-12);
    Ok(CorrectedPopulations {
        populations,
        out_of_range,
    })
}
