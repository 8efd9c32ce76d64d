//! A configured lattice plus the control building blocks shared by every
//! protocol.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::Result;
use crate::fock::{CompositeState, LatticeSpec, SectorRegistry};
use crate::noise::{NoiseModel, ReadoutModel};
use crate::propagator::StepPolicy;
use crate::schedule::{compile, ControlEvent, RampProfile, SampledControls, Schedule, Segment};
use crate::units::{mhz, mhz_vec, ns, us};

use super::config::{AncillaPrep, ExperimentConfig};

#[derive(Debug, Clone)]
pub struct Device {
    registry: SectorRegistry,
    pub ancilla: usize,
    pub loaded: Vec<usize>,
    pub large: Vec<f64>,
    pub small: Vec<f64>,
    pub transistor: Vec<f64>,
    pub inverted: Vec<f64>,
    pub t_ramp: f64,
    pub tau_fraction: f64,
    pub jump: f64,
    pub dt: f64,
    pub policy: StepPolicy,
    /// Down-conversion frequency of the final analysis pulse (rad/s).
    pub reference: f64,
    noise: Option<NoiseModel>,
    readout: ReadoutModel,
    pub shots: usize,
    pub seed: u64,
}

impl Device {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let l = &cfg.lattice;
        let lattice = LatticeSpec::new(mhz_vec(&l.j_bonds_mhz), mhz_vec(&l.u_mhz), l.n_max)?;
        let registry = SectorRegistry::new(lattice)?;
        let n = registry.n_sites();
        let nz = &cfg.noise;
        let noise = nz.enabled.then(|| {
            let (t1, t2) = if nz.decoherence {
                (nz.t1_us.iter().map(|&t| us(t)).collect(), nz.t2_us.iter().map(|&t| us(t)).collect())
            } else {
                (vec![f64::INFINITY; n], vec![f64::INFINITY; n])
            };
            NoiseModel {
                t1,
                t2,
                sigma: mhz_vec(&nz.sigma_mhz),
                seed: cfg.run.seed,
            }
        });
        let levels = l.n_max as usize + 1;
        let readout = if nz.enabled && nz.readout {
            ReadoutModel::symmetric(&nz.readout_fidelity, levels)?
        } else {
            ReadoutModel::ideal(n, levels)
        };
        let policy = StepPolicy {
            max_step: ns(cfg.run.max_step_ns),
            tolerance: cfg.run.tolerance,
            rotation_threshold: cfg.run.rotation_threshold,
            ..StepPolicy::default()
        };
        let d = &cfg.detunings;
        Ok(Self {
            registry,
            ancilla: l.ancilla_site,
            loaded: l.loaded_sites.clone(),
            large: mhz_vec(&d.large_mhz),
            small: mhz_vec(&d.small_mhz),
            transistor: mhz_vec(&d.transistor_mhz),
            inverted: mhz_vec(&d.inverted_mhz),
            t_ramp: ns(cfg.ramp.t_ramp_ns),
            tau_fraction: cfg.ramp.tau_fraction,
            jump: ns(cfg.ramp.jump_ns),
            dt: ns(cfg.run.dt_ns),
            policy,
            reference: mhz(cfg.ramsey.reference_mhz),
            noise,
            readout,
            shots: cfg.run.shots,
            seed: cfg.run.seed,
        })
    }

    pub fn registry(&self) -> &SectorRegistry {
        &self.registry
    }

    pub fn n_sites(&self) -> usize {
        self.registry.n_sites()
    }

    pub fn n_photons(&self) -> usize {
        self.loaded.len()
    }

    /// `Some` when noise is switched on, even if every rate is zero.
    pub fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref()
    }

    pub fn readout(&self) -> &ReadoutModel {
        &self.readout
    }

    pub fn set_noise(&mut self, noise: Option<NoiseModel>) {
        self.noise = noise;
    }

    /// Noise with Markovian channels active, which rules out the
    /// eigenbasis shortcuts.
    pub fn is_dissipative(&self) -> bool {
        self.noise.as_ref().is_some_and(NoiseModel::is_dissipative)
    }

    /// Sites left and right of the ancilla.
    pub fn clusters(&self) -> (Vec<usize>, Vec<usize>) {
        let left = (0..self.ancilla).collect();
        let right = (self.ancilla + 1..self.n_sites()).collect();
        (left, right)
    }

    pub fn vacuum(&self) -> CompositeState {
        CompositeState::vacuum(&self.registry)
    }

    /// Loading pulses in the large stagger, then the step to the small
    /// stagger.
    pub fn preparation(&self, ancilla: AncillaPrep) -> Vec<Segment> {
        let mut segs: Vec<Segment> = self
            .loaded
            .iter()
            .map(|&site| Segment::InstantRotation {
                site,
                angle: PI,
                phase: 0.0,
            })
            .collect();
        let angle = match ancilla {
            AncillaPrep::Ground => None,
            AncillaPrep::Excited => Some(PI),
            AncillaPrep::Superposition => Some(FRAC_PI_2),
        };
        if let Some(angle) = angle {
            segs.push(Segment::InstantRotation {
                site: self.ancilla,
                angle,
                phase: 0.0,
            });
        }
        if self.jump > 0.0 {
            // Long time constant: a practically linear step.
            segs.push(Segment::ExpRamp {
                duration: self.jump,
                start: self.large.clone(),
                end: self.small.clone(),
                tau: 1e3 * self.jump,
                profile: RampProfile::Approach,
                tau_override: true,
            });
        }
        segs
    }

    pub fn ramp(&self, t_ramp: f64, start: &[f64], end: &[f64], profile: RampProfile) -> Segment {
        Segment::ramp(t_ramp, start, end, self.tau_fraction, profile)
    }

    /// Small stagger → transistor → `target`.
    pub fn entangling(&self, t_ramp: f64, target: &[f64]) -> Vec<Segment> {
        vec![
            self.ramp(t_ramp, &self.small, &self.transistor, RampProfile::Approach),
            self.ramp(t_ramp, &self.transistor, target, RampProfile::Depart),
        ]
    }

    /// Exact time reverse of [`Device::entangling`].
    pub fn disentangling(&self, t_ramp: f64, target: &[f64]) -> Vec<Segment> {
        mirror(&self.entangling(t_ramp, target))
    }

    pub fn schedule(&self, segments: Vec<Segment>) -> Result<Schedule> {
        Schedule::from_segments(self.n_sites(), segments)
    }

    /// Compile and move every rotation into its site's rotating frame: a
    /// pulse with phase φ at time t is applied with phase `φ − ∫δ dt`.
    pub fn compile_framed(&self, schedule: &Schedule) -> Result<SampledControls> {
        let mut controls = compile(schedule, self.dt)?;
        let shifts: Vec<Option<f64>> = controls
            .events()
            .iter()
            .map(|(k, e)| match e {
                ControlEvent::Rotation { site, .. } => Some(controls.detuning_integral_until(*site, *k)),
                _ => None,
            })
            .collect();
        for ((_, e), shift) in controls.events_mut().iter_mut().zip(shifts) {
            if let (ControlEvent::Rotation { phase, .. }, Some(s)) = (e, shift) {
                *phase -= s;
            }
        }
        Ok(controls)
    }

    pub fn compile_segments(&self, segments: Vec<Segment>) -> Result<SampledControls> {
        self.compile_framed(&self.schedule(segments)?)
    }
}

/// Reverse order and mirror each segment.
pub fn mirror(segments: &[Segment]) -> Vec<Segment> {
    segments.iter().rev().map(Segment::mirrored).collect()
}
