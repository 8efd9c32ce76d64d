//! Phonon-assisted swap between the edges of the fluid band.
//!
//! In the transistor configuration the ancilla-excited sector forms a band
//! of hard-core states. Modulating one site at half the band width drives
//! a two-phonon transition from the top of the band, which the entangling
//! ramp prepares, to the bottom. Ramping back to the small stagger then
//! sends the two edges to opposite clusters.

use crate::analysis::{dominant_frequency, fringe_spectrum};
use crate::error::{domain, Result};
use crate::fermion::{highest_modes, lowest_modes, two_phonon_target, FreeFermionChain};
use crate::fock::{density_expectation, CompositeState};
use crate::propagator::{eigensolve_sector, evolve_sampled};
use crate::schedule::{compile, RampProfile, SampledControls, Schedule, Segment};
use crate::units::{mhz, ns};

use super::config::{AncillaPrep, ExperimentConfig, RamseyVariant};
use super::device::Device;
use super::ramsey::{measure_fringe, noon_sequence};

/// Flat-top `ε cos(ω t)` modulation of one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhononDrive {
    pub site: usize,
    /// ε (rad/s).
    pub amplitude: f64,
    /// ω (rad/s).
    pub frequency: f64,
    pub duration: f64,
    pub edge_sigma: f64,
}

impl PhononDrive {
    pub fn segment(&self, base: &[f64]) -> Segment {
        Segment::SiteModulation {
            site: self.site,
            amplitude: self.amplitude,
            frequency: self.frequency,
            duration: self.duration,
            edge_sigma: self.edge_sigma,
            base: base.to_vec(),
        }
    }

    /// Small stagger → transistor, drive, back to the small stagger.
    pub fn swap_sequence(&self, device: &Device, t_ramp: f64) -> Vec<Segment> {
        vec![
            device.ramp(t_ramp, &device.small, &device.transistor, RampProfile::Approach),
            self.segment(&device.transistor),
            device.ramp(t_ramp, &device.transistor, &device.small, RampProfile::Depart),
        ]
    }

    fn with_duration(&self, duration: f64) -> Self {
        Self { duration, ..*self }
    }
}

/// Edges of the ancilla-excited band in the transistor configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhononTarget {
    pub e_high: f64,
    pub e_low: f64,
    /// `e_high − e_low` (rad/s).
    pub gap: f64,
    /// Two-phonon resonance `gap / 2` (rad/s).
    pub drive_frequency: f64,
    /// Mean |J| (rad/s).
    pub j_scale: f64,
    /// The same resonance for free fermions on a uniform chain (rad/s).
    pub free_fermion: f64,
}

/// Band: eigenstates of the (photons + 1)-particle sector with at least
/// half their weight on configurations where the ancilla is occupied and no
/// other site holds a doublon.
pub fn phonon_target(device: &Device) -> Result<PhononTarget> {
    let reg = device.registry();
    let n = device.n_photons() + 1;
    if n > reg.max_particles() {
        return domain("no room for the ancilla excitation");
    }
    let sector = reg.sector(n);
    let eig = eigensolve_sector(&sector.sparse(&device.transistor)?)?;
    let band: Vec<f64> = (0..eig.dim())
        .filter(|&k| {
            let v = eig.vector(k);
            let weight: f64 = v
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let occ = sector.occupations_of(*i);
                    occ[device.ancilla] >= 1
                        && occ.iter().enumerate().all(|(s, &m)| s == device.ancilla || m <= 1)
                })
                .map(|(_, a)| a.norm_sqr())
                .sum();
            weight >= 0.5
        })
        .map(|k| eig.values[k])
        .collect();
    if band.len() < 2 {
        return domain("ancilla-excited band has fewer than two states");
    }
    let e_low = band.iter().copied().fold(f64::INFINITY, f64::min);
    let e_high = band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let j_scale = reg.lattice().j_scale();
    let chain = FreeFermionChain::uniform(device.n_sites(), j_scale);
    let lo = lowest_modes(&chain, 2);
    let hi = highest_modes(&chain, 2);
    let free_fermion = two_phonon_target(&chain, [lo[0], lo[1]], [hi[0], hi[1]])?;
    Ok(PhononTarget {
        e_high,
        e_low,
        gap: e_high - e_low,
        drive_frequency: 0.5 * (e_high - e_low),
        j_scale,
        free_fermion,
    })
}

fn slice(controls: &SampledControls, from: usize, to: usize) -> SampledControls {
    let mut out = SampledControls::new(controls.dt(), controls.n_sites());
    for k in from..to {
        out.push_sample(controls.sample(k));
    }
    out
}

/// Loading, ancilla preparation and the ramp into the transistor
/// configuration.
pub fn transistor_state(device: &Device, ancilla: AncillaPrep, t_ramp: f64) -> Result<CompositeState> {
    let mut segs = device.preparation(ancilla);
    segs.push(device.ramp(t_ramp, &device.small, &device.transistor, RampProfile::Approach));
    let controls = device.compile_segments(segs)?;
    evolve_sampled(&device.vacuum(), &controls, device.registry(), &device.policy)
}

/// States after driving `start` for each duration. One run over the
/// longest drive is checkpointed where each shorter drive's falling edge
/// begins; only the edges are simulated separately.
pub fn drive_states(
    device: &Device,
    start: &CompositeState,
    drive: &PhononDrive,
    durations: &[f64],
) -> Result<Vec<CompositeState>> {
    let reg = device.registry();
    let dt = device.dt;
    let longest = durations.iter().copied().fold(0.0, f64::max);
    let full = compile(
        &Schedule::from_segments(device.n_sites(), vec![drive.with_duration(longest).segment(&device.transistor)])?,
        dt,
    )?;
    let split = |d: f64| (((d - 2.0 * drive.edge_sigma) / dt).floor().max(0.0) as usize).min(full.n_samples());
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));
    let mut out = vec![CompositeState::new(); durations.len()];
    let (mut psi, mut at) = (start.clone(), 0);
    for i in order {
        let k = split(durations[i]);
        psi = evolve_sampled(&psi, &slice(&full, at, k), reg, &device.policy)?;
        at = k;
        let own = compile(
            &Schedule::from_segments(device.n_sites(), vec![drive.with_duration(durations[i]).segment(&device.transistor)])?,
            dt,
        )?;
        let tail = slice(&own, k.min(own.n_samples()), own.n_samples());
        out[i] = evolve_sampled(&psi, &tail, reg, &device.policy)?;
    }
    Ok(out)
}

/// Fraction of photons found right of the ancilla.
pub fn right_fraction(device: &Device, psi: &CompositeState) -> f64 {
    let density = density_expectation(psi, device.registry());
    let (_, right) = device.clusters();
    right.iter().map(|&s| density[s]).sum::<f64>() / device.n_photons().max(1) as f64
}

/// Drive, then ramp back to the small stagger.
fn swap_outcomes(device: &Device, start: &CompositeState, drive: &PhononDrive, durations: &[f64]) -> Result<Vec<CompositeState>> {
    let back = device.compile_segments(vec![device.ramp(
        device.t_ramp,
        &device.transistor,
        &device.small,
        RampProfile::Depart,
    )])?;
    drive_states(device, start, drive, durations)?
        .iter()
        .map(|psi| evolve_sampled(psi, &back, device.registry(), &device.policy))
        .collect()
}

fn drive_template(cfg: &ExperimentConfig, frequency: f64) -> PhononDrive {
    PhononDrive {
        site: cfg.phonon.drive_site,
        amplitude: mhz(cfg.phonon.amplitude_mhz),
        frequency,
        duration: 0.0,
        edge_sigma: ns(cfg.phonon.edge_sigma_ns),
    }
}

fn duration_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let p = &cfg.phonon;
    if !p.duration_ns.is_empty() {
        return p.duration_ns.iter().map(|&d| ns(d)).collect();
    }
    let m = p.duration_points.max(2);
    (0..m).map(|k| ns(p.max_duration_ns) * k as f64 / (m - 1) as f64).collect()
}

/// Swap drive at resonance with the duration of maximal transfer.
pub fn calibrate_drive(device: &Device, cfg: &ExperimentConfig) -> Result<PhononDrive> {
    let frequency = match cfg.phonon.drive_mhz {
        Some(f) => mhz(f),
        None => phonon_target(device)?.drive_frequency,
    };
    let template = drive_template(cfg, frequency);
    if let Some(d) = cfg.phonon.swap_duration_ns {
        return Ok(template.with_duration(ns(d)));
    }
    let start = transistor_state(device, AncillaPrep::Excited, device.t_ramp)?;
    let grid = duration_grid(cfg);
    let transfer: Vec<f64> = swap_outcomes(device, &start, &template, &grid)?
        .iter()
        .map(|psi| right_fraction(device, psi))
        .collect();
    let best = (0..grid.len())
        .max_by(|&a, &b| transfer[a].total_cmp(&transfer[b]))
        .expect("nonempty grid");
    let duration = if best > 0 && best + 1 < grid.len() {
        parabola_vertex(
            [grid[best - 1], grid[best], grid[best + 1]],
            [transfer[best - 1], transfer[best], transfer[best + 1]],
        )
    } else {
        grid[best]
    };
    Ok(template.with_duration(duration))
}

/// Abscissa of the vertex through three points, clamped to their span.
pub fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if curv >= 0.0 {
        return x[1];
    }
    let v = 0.5 * (x[0] + x[1]) - d1 / (2.0 * curv);
    v.clamp(x[0], x[2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChevronPoint {
    pub frequency: f64,
    pub duration: f64,
    /// Occupations of every site after ramping back to the small stagger.
    pub occupations: Vec<f64>,
    pub transfer: f64,
}

#[derive(Debug, Clone)]
pub struct PhononResult {
    pub target: PhononTarget,
    pub drive: PhononDrive,
    /// `(ω_d, transfer)` at the swap duration.
    pub scan: Vec<(f64, f64)>,
    /// Scan maximum, interpolated (rad/s).
    pub peak_frequency: f64,
    pub chevron: Vec<ChevronPoint>,
    /// Largest occupation change the drive causes with the ancilla in
    /// ground, over durations up to the swap.
    pub ground_max_change: f64,
    /// `(duration, dominant fringe frequency in Hz)` of the conditional
    /// Ramsey sequence.
    pub fringe: Vec<(f64, f64)>,
}

fn frequency_grid(cfg: &ExperimentConfig, centre: f64) -> Vec<f64> {
    let p = &cfg.phonon;
    if !p.frequency_mhz.is_empty() {
        return p.frequency_mhz.iter().map(|&f| mhz(f)).collect();
    }
    let m = p.scan_points;
    if m == 1 {
        return vec![centre];
    }
    (0..m)
        .map(|k| centre * (1.0 + p.scan_span * (k as f64 / (m - 1) as f64 - 0.5)))
        .collect()
}

pub fn run_phonon_swap(cfg: &ExperimentConfig) -> Result<PhononResult> {
    let device = Device::from_config(cfg)?;
    if cfg.phonon.drive_site == device.ancilla {
        return domain("the drive must act on a lattice site other than the ancilla");
    }
    let target = phonon_target(&device)?;
    let drive = calibrate_drive(&device, cfg)?;
    let excited = transistor_state(&device, AncillaPrep::Excited, device.t_ramp)?;

    let freqs = frequency_grid(cfg, target.drive_frequency);
    let durations = duration_grid(cfg);
    let mut chevron = Vec::with_capacity(freqs.len() * durations.len());
    let mut scan = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let d = PhononDrive { frequency: f, ..drive };
        let psi = &swap_outcomes(&device, &excited, &d, &[drive.duration])?[0];
        scan.push((f, right_fraction(&device, psi)));
        for (psi, &t) in swap_outcomes(&device, &excited, &d, &durations)?.iter().zip(&durations) {
            chevron.push(ChevronPoint {
                frequency: f,
                duration: t,
                occupations: density_expectation(psi, device.registry()),
                transfer: right_fraction(&device, psi),
            });
        }
    }
    let best = (0..scan.len())
        .max_by(|&a, &b| scan[a].1.total_cmp(&scan[b].1))
        .expect("nonempty scan");
    let peak_frequency = if best > 0 && best + 1 < scan.len() {
        parabola_vertex(
            [scan[best - 1].0, scan[best].0, scan[best + 1].0],
            [scan[best - 1].1, scan[best].1, scan[best + 1].1],
        )
    } else {
        scan[best].0
    };

    // Driven against undriven at equal durations, so free evolution of the
    // ground branch in the transistor configuration cancels out.
    let ground = transistor_state(&device, AncillaPrep::Ground, device.t_ramp)?;
    let idle = PhononDrive { amplitude: 0.0, ..drive };
    let mut window: Vec<f64> = durations.iter().copied().filter(|&t| t < drive.duration).collect();
    window.push(drive.duration);
    let driven = drive_states(&device, &ground, &drive, &window)?;
    let undriven = drive_states(&device, &ground, &idle, &window)?;
    let ground_max_change = driven
        .iter()
        .zip(&undriven)
        .flat_map(|(a, b)| {
            let (na, nb) = (
                density_expectation(a, device.registry()),
                density_expectation(b, device.registry()),
            );
            na.into_iter().zip(nb).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);

    let mut fringe = Vec::new();
    let m = cfg.phonon.fringe_points;
    if m > 0 && cfg.protocol.ancilla == AncillaPrep::Superposition {
        let holds: Vec<f64> = cfg.ramsey.hold_times_ns().into_iter().map(ns).collect();
        for k in 0..m {
            let t = if m == 1 { drive.duration } else { drive.duration * k as f64 / (m - 1) as f64 };
            let d = drive.with_duration(t);
            let seq = noon_sequence(&device, device.t_ramp, RamseyVariant::Phonon, Some(&d))?;
            let record = measure_fringe(&device, &seq, &holds)?.record;
            fringe.push((t, dominant_frequency(&fringe_spectrum(&record)?)?.peak.frequency));
        }
    }
    Ok(PhononResult {
        target,
        drive,
        scan,
        peak_frequency,
        chevron,
        ground_max_change,
        fringe,
    })
}

/// Frequency in units of `|J|`.
pub fn in_j_units(omega: f64, target: &PhononTarget) -> f64 {
    omega / target.j_scale
}
