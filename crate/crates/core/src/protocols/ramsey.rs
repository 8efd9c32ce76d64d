//! Many-body Ramsey interferometry: N00N fringes, sensing and ramp sweeps.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use crate::analysis::{
    dominant_frequency, fold_frequency, fringe_spectrum, refine_frequency, spectral_peaks, Dominant, FoldedSpectrum,
    FringeRecord, Peak,
};
use crate::error::{domain, Error, Result};
use crate::fock::{CompositeState, FockState};
use crate::noise::{evolve_trajectory, reported_probability, sample_quasistatic, trajectory_rng};
use crate::propagator::{evolve_sampled_many, eigensolve_sector, evolve_sampled};
use crate::schedule::{apply_rotation, apply_virtual_phase, doublon_weight, ControlEvent, SampledControls, Segment};
use crate::units::{ns, TWO_PI};

use super::config::{AncillaPrep, ExperimentConfig, RamseyVariant};
use super::device::{mirror, Device};
use super::phonon::{calibrate_drive, PhononDrive};

/// Everything before the hold, the hold configuration, everything after.
#[derive(Debug, Clone)]
pub struct HoldSequence {
    pub pre: SampledControls,
    pub hold: Vec<f64>,
    pub post: SampledControls,
}

impl HoldSequence {
    /// Build from segments; `post` must not contain pulses.
    pub fn new(device: &Device, pre: Vec<Segment>, hold: Vec<f64>, post: Vec<Segment>) -> Result<Self> {
        let pre = device.compile_segments(pre)?;
        let post = device.compile_segments(post)?;
        if post.events().iter().any(|(_, e)| !matches!(e, ControlEvent::Marker(_))) {
            return domain("the block after the hold must not contain pulses");
        }
        Ok(Self { pre, hold, post })
    }

    /// Accumulated rotating-frame phase of `site` for hold time `t`.
    pub fn frame_phase(&self, site: usize, t: f64) -> f64 {
        self.pre.detuning_integral(site) + self.hold[site] * t + self.post.detuning_integral(site)
    }

    /// Phase of the analysis pulse: frame tracking plus down-conversion.
    fn analysis_phase(&self, device: &Device, t: f64) -> f64 {
        self.frame_phase(device.ancilla, t) + device.reference * t
    }

    /// The whole sequence for one hold time, analysis pulse included.
    pub fn full(&self, device: &Device, t: f64) -> Result<SampledControls> {
        let mut controls = self.pre.clone();
        let n = (t / device.dt).round() as usize;
        if ((n as f64) * device.dt - t).abs() > 1e-6 * device.dt {
            return domain(format!("hold time {t:e} s is not a multiple of the sample step"));
        }
        let mut hold = SampledControls::new(device.dt, device.n_sites());
        hold.push_constant(&self.hold, n);
        controls.append(&hold)?;
        controls.append(&self.post)?;
        controls.push_event(ControlEvent::VirtualPhase {
            site: device.ancilla,
            phase: self.analysis_phase(device, t),
        });
        controls.push_event(ControlEvent::Rotation {
            site: device.ancilla,
            angle: FRAC_PI_2,
            phase: 0.0,
        });
        Ok(controls)
    }
}

struct Component {
    energy: f64,
    weight: C64,
    image: CompositeState,
}

/// Reported ancilla P(1) for every hold time with constant per-site offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentFringe {
    pub p1: Vec<f64>,
    /// Largest ancilla doublon weight met by the analysis pulse. The pulse
    /// leaves that weight alone, as a selective pulse on a transmon does,
    /// and readout reports it as "2".
    pub max_doublon: f64,
}

/// The hold is propagated exactly in its eigenbasis, and only eigenvectors
/// the state actually populates are pushed through `post`.
pub fn coherent_fringe(device: &Device, seq: &HoldSequence, holds: &[f64], offsets: &[f64]) -> Result<CoherentFringe> {
    let reg = device.registry();
    let pre = seq.pre.with_offsets(offsets);
    let post = seq.post.with_offsets(offsets);
    let hold: Vec<f64> = seq.hold.iter().zip(offsets).map(|(h, o)| h + o).collect();
    let psi = evolve_sampled(&device.vacuum(), &pre, reg, &device.policy)?;
    let total = psi.norm_sqr();
    let mut comps = Vec::new();
    let mut vectors = Vec::new();
    for (n, amps) in psi.sectors() {
        let eig = eigensolve_sector(&reg.sector(n).sparse(&hold)?)?;
        let coeffs = eig.coefficients(amps);
        for (k, c) in coeffs.iter().enumerate() {
            if c.norm_sqr() <= 1e-12 * total {
                continue;
            }
            let mut v = CompositeState::new();
            v.set_sector(n, eig.vector(k));
            vectors.push(v);
            comps.push((eig.values[k], *c));
        }
    }
    let comps: Vec<Component> = evolve_sampled_many(&vectors, &post, reg, &device.policy)?
        .into_iter()
        .zip(comps)
        .map(|(image, (energy, weight))| Component { energy, weight, image })
        .collect();
    let mut max_doublon: f64 = 0.0;
    let p1 = holds
        .iter()
        .map(|&t| {
            let mut out = CompositeState::new();
            for c in &comps {
                out.add_scaled(c.weight * C64::from_polar(1.0, -c.energy * t), &c.image);
            }
            let out = apply_virtual_phase(&out, reg, device.ancilla, seq.analysis_phase(device, t));
            max_doublon = max_doublon.max(doublon_weight(&out, reg, device.ancilla));
            let out = apply_rotation(&out, reg, device.ancilla, FRAC_PI_2, 0.0, f64::INFINITY)?;
            reported_probability(&out, reg, device.readout(), &[(device.ancilla, 1)])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherentFringe { p1, max_doublon })
}

/// Record plus the largest doublon weight seen by the analysis pulse.
#[derive(Debug, Clone)]
pub struct MeasuredFringe {
    pub record: FringeRecord,
    pub max_doublon: f64,
}

impl MeasuredFringe {
    fn warnings(&self, threshold: f64) -> Vec<String> {
        if self.max_doublon > threshold {
            vec![format!(
                "analysis pulse met {:.3} ancilla doublon weight; it reads out as level 2",
                self.max_doublon
            )]
        } else {
            Vec::new()
        }
    }
}

/// Fringe record for the device's noise setting. Without noise the record
/// is exact; with noise every (shot, hold time) yields one sampled readout
/// outcome and the record carries binomial standard errors. A shot keeps
/// one quasi-static draw across the hold grid.
pub fn measure_fringe(device: &Device, seq: &HoldSequence, holds: &[f64]) -> Result<MeasuredFringe> {
    let Some(model) = device.noise() else {
        let f = coherent_fringe(device, seq, holds, &vec![0.0; device.n_sites()])?;
        return Ok(MeasuredFringe {
            record: FringeRecord::new(holds.to_vec(), f.p1),
            max_doublon: f.max_doublon,
        });
    };
    let n_holds = holds.len();
    // Without offsets every shot sees the same coherent fringe.
    let shared = if !model.is_dissipative() && model.sigma.iter().all(|&s| s == 0.0) {
        Some(coherent_fringe(device, seq, holds, &vec![0.0; device.n_sites()])?)
    } else {
        None
    };
    let shots: Vec<(Vec<bool>, f64)> = (0..device.shots)
        .into_par_iter()
        .map(|shot| -> Result<(Vec<bool>, f64)> {
            if model.is_dissipative() {
                let mut worst: f64 = 0.0;
                let outcomes = holds
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| {
                        let mut rng = trajectory_rng(device.seed, (shot * n_holds + k) as u64);
                        let mut controls = seq.full(device, t)?;
                        // The analysis pulse is applied by hand: selectivity
                        // is only enforced for the sequence's own pulses.
                        let analysis = controls.events_mut().pop().expect("analysis pulse");
                        let psi = evolve_trajectory(
                            &device.vacuum(),
                            &controls,
                            device.registry(),
                            model,
                            &mut rng,
                            &device.policy,
                        )?;
                        worst = worst.max(doublon_weight(&psi, device.registry(), device.ancilla));
                        let ControlEvent::Rotation { site, angle, phase } = analysis.1 else {
                            unreachable!("last event is the analysis pulse")
                        };
                        let psi = apply_rotation(&psi, device.registry(), site, angle, phase, f64::INFINITY)?;
                        let p = reported_probability(&psi, device.registry(), device.readout(), &[(device.ancilla, 1)])?;
                        Ok(rng.random::<f64>() < p)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((outcomes, worst))
            } else {
                let mut rng = trajectory_rng(device.seed, shot as u64);
                let offsets = sample_quasistatic(model, &mut rng);
                let f = match &shared {
                    Some(f) => f.clone(),
                    None => coherent_fringe(device, seq, holds, &offsets)?,
                };
                Ok((f.p1.iter().map(|&p| rng.random::<f64>() < p).collect(), f.max_doublon))
            }
        })
        .collect::<Result<_>>()?;
    let max_doublon = shots.iter().map(|s| s.1).fold(0.0, f64::max);
    let shots: Vec<Vec<bool>> = shots.into_iter().map(|s| s.0).collect();
    let m = shots.len() as f64;
    let mut p1 = vec![0.0; n_holds];
    for outcomes in &shots {
        for (acc, &o) in p1.iter_mut().zip(outcomes) {
            *acc += o as u8 as f64;
        }
    }
    p1.iter_mut().for_each(|p| *p /= m);
    let stderr = p1.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
    Ok(MeasuredFringe {
        record: FringeRecord {
            hold_times: holds.to_vec(),
            p1,
            stderr: Some(stderr),
        },
        max_doublon,
    })
}

/// Fringe frequency expected from the hold-configuration spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePrediction {
    /// Energy of the state with all photons right of the ancilla and the
    /// ancilla excited (rad/s).
    pub e_right: f64,
    /// Energy of the loaded state with the ancilla in ground (rad/s).
    pub e_left: f64,
    /// `ω_ref − (E_R − E_L − δ_ancilla)`, in Hz. The ancilla's own detuning
    /// is removed by frame tracking.
    pub signed_hz: f64,
    pub folded_hz: f64,
}

/// Mirror image of the loaded sites across the ancilla.
pub fn mirrored_sites(device: &Device) -> Result<Vec<usize>> {
    device
        .loaded
        .iter()
        .map(|&s| {
            (2 * device.ancilla)
                .checked_sub(s)
                .filter(|&m| m < device.n_sites())
                .ok_or_else(|| Error::Domain(format!("site {s} has no mirror image across the ancilla")))
        })
        .collect()
}

pub fn predict_fringe(device: &Device, hold: &[f64], sample_step: f64) -> Result<FringePrediction> {
    let reg = device.registry();
    let n_sites = device.n_sites();
    let mut left = vec![0u8; n_sites];
    device.loaded.iter().for_each(|&s| left[s] = 1);
    let mut right = vec![0u8; n_sites];
    mirrored_sites(device)?.into_iter().for_each(|s| right[s] = 1);
    right[device.ancilla] = 1;
    let energy = |occ: Vec<u8>| -> Result<f64> {
        let fs = FockState::new(occ);
        let n = fs.total();
        let basis = reg.basis(n);
        let idx = basis
            .index_of(&fs)
            .ok_or_else(|| Error::Domain(format!("{fs} is outside the truncated basis")))?;
        let eig = eigensolve_sector(&reg.sector(n).sparse(hold)?)?;
        let mut x = vec![C64::new(0.0, 0.0); basis.dim()];
        x[idx] = C64::new(1.0, 0.0);
        Ok(eig.values[eig.max_overlap_index(&x)])
    };
    let e_left = energy(left)?;
    let e_right = energy(right)?;
    let signed = (device.reference - (e_right - e_left - hold[device.ancilla])) / TWO_PI;
    Ok(FringePrediction {
        e_right,
        e_left,
        signed_hz: signed,
        folded_hz: fold_frequency(signed, sample_step),
    })
}

#[derive(Debug, Clone)]
pub struct RamseyResult {
    pub record: FringeRecord,
    pub spectrum: FoldedSpectrum,
    pub dominant: Dominant,
    /// Dominant frequency refined off the FFT grid (Hz).
    pub frequency: f64,
    pub prediction: FringePrediction,
    /// Drive used by the phonon-assisted variant.
    pub drive: Option<PhononDrive>,
    pub warnings: Vec<String>,
}

fn hold_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.ramsey.hold_times_ns().into_iter().map(ns).collect()
}

/// Entangle into the N00N state, hold, disentangle, analyse.
pub fn noon_sequence(device: &Device, t_ramp: f64, variant: RamseyVariant, drive: Option<&PhononDrive>) -> Result<HoldSequence> {
    let (entangle, hold) = match variant {
        RamseyVariant::Inverted => (device.entangling(t_ramp, &device.inverted), device.inverted.clone()),
        RamseyVariant::Phonon => {
            let drive = drive.ok_or_else(|| Error::Domain("phonon variant needs a drive".into()))?;
            (drive.swap_sequence(device, t_ramp), device.small.clone())
        }
    };
    let mut pre = device.preparation(AncillaPrep::Superposition);
    pre.extend(entangle.iter().cloned());
    HoldSequence::new(device, pre, hold, mirror(&entangle))
}

fn analyse(measured: MeasuredFringe, threshold: f64, prediction: FringePrediction, drive: Option<PhononDrive>) -> Result<RamseyResult> {
    let mut warnings = measured.warnings(threshold);
    let record = measured.record;
    let spectrum = fringe_spectrum(&record)?;
    let dominant = dominant_frequency(&spectrum)?;
    let res = spectrum.resolution();
    let frequency = refine_frequency(&record, dominant.peak.frequency, res)?.clamp(0.0, spectrum.nyquist());
    if let Some(tie) = dominant.tie {
        warnings.push(format!(
            "dominant peak at {:.2} MHz is tied with {:.2} MHz",
            dominant.peak.frequency * 1e-6,
            tie.frequency * 1e-6
        ));
    }
    Ok(RamseyResult {
        record,
        spectrum,
        dominant,
        frequency,
        prediction,
        drive,
        warnings,
    })
}

pub fn run_noon_ramsey(cfg: &ExperimentConfig) -> Result<RamseyResult> {
    if cfg.protocol.ancilla != AncillaPrep::Superposition {
        return domain("Ramsey interferometry needs the ancilla prepared in superposition");
    }
    let device = Device::from_config(cfg)?;
    let holds = hold_grid(cfg);
    let step = ns(cfg.ramsey.hold_step_ns);
    let variant = cfg.protocol.variant;
    let drive = match variant {
        RamseyVariant::Inverted => None,
        RamseyVariant::Phonon => Some(calibrate_drive(&device, cfg)?),
    };
    let seq = noon_sequence(&device, device.t_ramp, variant, drive.as_ref())?;
    let measured = measure_fringe(&device, &seq, &holds)?;
    analyse(measured, device.policy.rotation_threshold, predict_fringe(&device, &seq.hold, step)?, drive)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingPoint {
    /// Detuning applied to each cluster (rad/s).
    pub delta: f64,
    /// Refined folded fringe frequency (Hz).
    pub frequency: f64,
    /// Change from the unperturbed fringe (Hz).
    pub shift: f64,
}

#[derive(Debug, Clone)]
pub struct SensingResult {
    pub baseline: f64,
    pub points: Vec<SensingPoint>,
    /// Least-squares slope of shift against δ/2π through the origin.
    pub slope: f64,
    /// Slope of the signed (unfolded) fringe; the folded shift has the
    /// opposite sign whenever the fringe sits on the negative side.
    pub signed_slope: f64,
    pub warnings: Vec<String>,
}

/// Hold configuration with `+δ` on the right cluster and `−δ` on the left.
pub fn sensing_hold(device: &Device, delta: f64) -> Vec<f64> {
    let (left, right) = device.clusters();
    let mut hold = device.inverted.clone();
    left.iter().for_each(|&s| hold[s] -= delta);
    right.iter().for_each(|&s| hold[s] += delta);
    hold
}

pub fn run_sensing(cfg: &ExperimentConfig) -> Result<SensingResult> {
    let device = Device::from_config(cfg)?;
    let holds = hold_grid(cfg);
    let step = ns(cfg.ramsey.hold_step_ns);
    let base = noon_sequence(&device, device.t_ramp, RamseyVariant::Inverted, None)?;
    let mut warnings = Vec::new();

    let fringe_at = |delta: f64, guess: Option<f64>| -> Result<(f64, f64)> {
        let seq = HoldSequence {
            hold: sensing_hold(&device, delta),
            ..base.clone()
        };
        let record = measure_fringe(&device, &seq, &holds)?.record;
        let prediction = predict_fringe(&device, &seq.hold, step)?;
        let spectrum = fringe_spectrum(&record)?;
        let centre = match guess {
            Some(g) => g,
            None => dominant_frequency(&spectrum)?.peak.frequency,
        };
        Ok((refine_frequency(&record, centre, spectrum.resolution())?, prediction.signed_hz))
    };
    let (baseline, signed0) = fringe_at(0.0, None)?;
    let mut points = Vec::new();
    let (mut sxy, mut sxx, mut sxy_signed) = (0.0, 0.0, 0.0);
    for &d_mhz in &cfg.sensing.delta_mhz {
        let delta = TWO_PI * d_mhz * 1e6;
        let signed_pred = predict_fringe(&device, &sensing_hold(&device, delta), step)?.signed_hz;
        let expected_fold = fold_frequency(signed_pred, step);
        let (frequency, signed) = fringe_at(delta, Some(expected_fold))?;
        let shift = frequency - baseline;
        if (fold_frequency(signed, step) - fold_frequency(signed0, step)).signum() != (signed - signed0).signum() {
            warnings.push(format!(
                "δ/2π = {d_mhz} MHz: fringe lies on the negative side, so the folded shift has the opposite sign of the signed shift"
            ));
        }
        let x = d_mhz * 1e6;
        sxy += x * shift;
        sxx += x * x;
        sxy_signed += x * (signed - signed0);
        points.push(SensingPoint { delta, frequency, shift });
    }
    if sxx == 0.0 {
        return domain("sensing needs at least one nonzero δ");
    }
    Ok(SensingResult {
        baseline,
        points,
        slope: sxy / sxx,
        signed_slope: sxy_signed / sxx,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub t_ramp: f64,
    pub max_doublon: f64,
    pub spectrum: FoldedSpectrum,
    pub dominant: Dominant,
    /// Local maxima within 20 % of the strongest.
    pub peaks: Vec<Peak>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub prediction: FringePrediction,
    pub reference_hz: f64,
}

/// Relative amplitude for counting a peak as present in a sweep point.
pub const SWEEP_PEAK_FLOOR: f64 = 0.2;

pub fn run_ramp_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let device = Device::from_config(cfg)?;
    let holds = hold_grid(cfg);
    let step = ns(cfg.ramsey.hold_step_ns);
    let points = cfg
        .sweep
        .t_ramp_ns
        .iter()
        .map(|&t| {
            let seq = noon_sequence(&device, ns(t), RamseyVariant::Inverted, None)?;
            let measured = measure_fringe(&device, &seq, &holds)?;
            let spectrum = fringe_spectrum(&measured.record)?;
            let dominant = dominant_frequency(&spectrum)?;
            let peaks = spectral_peaks(&spectrum, SWEEP_PEAK_FLOOR);
            Ok(SweepPoint {
                t_ramp: ns(t),
                max_doublon: measured.max_doublon,
                spectrum,
                dominant,
                peaks,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        points,
        prediction: predict_fringe(&device, &device.inverted, step)?,
        reference_hz: fold_frequency(device.reference / TWO_PI, step),
    })
}
