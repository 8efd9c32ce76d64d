//! Repeated entangle/disentangle pairs: the many-body echo and the
//! reversibility benchmark.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::analysis::{fit_power_decay, tone_amplitude, tone_amplitude_stderr, FitResult, FringeRecord};
use crate::error::Result;
use crate::fock::CompositeState;
use crate::noise::{evolve_trajectory_observed, reported_probability, trajectory_rng};
use crate::propagator::evolve_sampled_observed;
use crate::schedule::Segment;
use crate::units::ns;

use super::config::{AncillaPrep, ExperimentConfig};
use super::device::Device;
use super::ramsey::{measure_fringe, predict_fringe, FringePrediction, HoldSequence};

#[derive(Debug, Clone)]
pub struct EchoRecord {
    pub record: FringeRecord,
    /// Fringe amplitude at the N00N frequency.
    pub amplitude: f64,
    pub amplitude_se: f64,
}

#[derive(Debug, Clone)]
pub struct EchoPoint {
    pub pairs: usize,
    pub echo: EchoRecord,
    pub plain: Option<EchoRecord>,
}

#[derive(Debug, Clone)]
pub struct EchoResult {
    pub points: Vec<EchoPoint>,
    pub prediction: FringePrediction,
    /// `A(1 − ε)^{4N}` fitted to the echo amplitudes.
    pub fit: Option<FitResult>,
    pub warnings: Vec<String>,
}

/// `π/2 · (U M)^N · π · (U M)^{N−1} · U | hold | M`; without `refocus` the
/// π pulse is left out.
pub fn echo_sequence(device: &Device, pairs: usize, refocus: bool) -> Result<HoldSequence> {
    let u = device.entangling(device.t_ramp, &device.inverted);
    let m = device.disentangling(device.t_ramp, &device.inverted);
    let mut pre = device.preparation(AncillaPrep::Superposition);
    for _ in 0..pairs {
        pre.extend(u.iter().cloned());
        pre.extend(m.iter().cloned());
    }
    if refocus {
        pre.push(Segment::InstantRotation {
            site: device.ancilla,
            angle: PI,
            phase: 0.0,
        });
    }
    for _ in 1..pairs {
        pre.extend(u.iter().cloned());
        pre.extend(m.iter().cloned());
    }
    pre.extend(u);
    HoldSequence::new(device, pre, device.inverted.clone(), m)
}

pub fn run_echo(cfg: &ExperimentConfig) -> Result<EchoResult> {
    let device = Device::from_config(cfg)?;
    let holds: Vec<f64> = cfg.ramsey.hold_times_ns().into_iter().map(ns).collect();
    let prediction = predict_fringe(&device, &device.inverted, ns(cfg.ramsey.hold_step_ns))?;
    let f = prediction.folded_hz;
    let measure = |pairs: usize, refocus: bool| -> Result<EchoRecord> {
        let record = measure_fringe(&device, &echo_sequence(&device, pairs, refocus)?, &holds)?.record;
        Ok(EchoRecord {
            amplitude: tone_amplitude(&record, f),
            amplitude_se: tone_amplitude_stderr(&record),
            record,
        })
    };
    let mut points = Vec::new();
    for &pairs in &cfg.echo.pairs {
        points.push(EchoPoint {
            pairs,
            echo: measure(pairs, true)?,
            plain: if cfg.echo.compare_plain { Some(measure(pairs, false)?) } else { None },
        });
    }
    let mut warnings = Vec::new();
    let fit = if points.len() >= 2 {
        let data: Vec<(f64, f64)> = points.iter().map(|p| (p.pairs as f64, p.echo.amplitude)).collect();
        match fit_power_decay(&data, 4) {
            Ok(fit) => Some(fit),
            Err(e) => {
                warnings.push(format!("echo decay fit failed: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(EchoResult {
        points,
        prediction,
        fit,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct ReversibilityCurve {
    pub t_ramp: f64,
    /// Probability that every loaded site reads out occupied, after
    /// `N = 0, 1, …` pairs.
    pub fidelity: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `A(1 − ε)^{2N}`.
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone)]
pub struct ReversibilityResult {
    pub curves: Vec<ReversibilityCurve>,
    pub warnings: Vec<String>,
}

/// Preparation then `max_pairs` entangle/disentangle pairs, with a marker
/// before the first pair and after each one.
pub fn reversibility_sequence(device: &Device, prep: AncillaPrep, t_ramp: f64, max_pairs: usize) -> Vec<Segment> {
    let u = device.entangling(t_ramp, &device.inverted);
    let m = device.disentangling(t_ramp, &device.inverted);
    let mut segs = device.preparation(prep);
    segs.push(Segment::ReadoutMarker { label: "0".into() });
    for k in 1..=max_pairs {
        segs.extend(u.iter().cloned());
        segs.extend(m.iter().cloned());
        segs.push(Segment::ReadoutMarker { label: k.to_string() });
    }
    segs
}

fn loaded_report(device: &Device, psi: &CompositeState) -> Result<f64> {
    let want: Vec<(usize, u8)> = device.loaded.iter().map(|&s| (s, 1)).collect();
    reported_probability(psi, device.registry(), device.readout(), &want)
}

pub fn reversibility_curve(device: &Device, prep: AncillaPrep, t_ramp: f64, max_pairs: usize) -> Result<ReversibilityCurve> {
    let controls = device.compile_segments(reversibility_sequence(device, prep, t_ramp, max_pairs))?;
    let reg = device.registry();
    let run = |shot: usize| -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(max_pairs + 1);
        let mut failure = None;
        let mut observe = |_: &str, psi: &CompositeState| match loaded_report(device, psi) {
            Ok(v) => values.push(v),
            Err(e) => failure = Some(e),
        };
        match device.noise() {
            Some(model) => {
                let mut rng = trajectory_rng(device.seed, shot as u64);
                evolve_trajectory_observed(&device.vacuum(), &controls, reg, model, &mut rng, &device.policy, &mut observe)?;
            }
            None => {
                evolve_sampled_observed(&device.vacuum(), &controls, reg, &device.policy, &mut observe)?;
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(values),
        }
    };
    let shots = if device.noise().is_some() { device.shots } else { 1 };
    let per_shot: Vec<Vec<f64>> = (0..shots).into_par_iter().map(run).collect::<Result<_>>()?;
    let m = per_shot.len() as f64;
    let mut fidelity = vec![0.0; max_pairs + 1];
    let mut sq = vec![0.0; max_pairs + 1];
    for v in &per_shot {
        for (k, x) in v.iter().enumerate() {
            fidelity[k] += x;
            sq[k] += x * x;
        }
    }
    fidelity.iter_mut().for_each(|f| *f /= m);
    let stderr = if per_shot.len() > 1 {
        sq.iter()
            .zip(&fidelity)
            .map(|(s, f)| ((s / m - f * f).max(0.0) / (m - 1.0)).sqrt())
            .collect()
    } else {
        vec![0.0; max_pairs + 1]
    };
    let data: Vec<(f64, f64)> = fidelity.iter().enumerate().map(|(k, f)| (k as f64, *f)).collect();
    let fit = if max_pairs >= 1 { fit_power_decay(&data, 2).ok() } else { None };
    Ok(ReversibilityCurve {
        t_ramp,
        fidelity,
        stderr,
        fit,
    })
}

pub fn run_reversibility(cfg: &ExperimentConfig) -> Result<ReversibilityResult> {
    let device = Device::from_config(cfg)?;
    let mut warnings = Vec::new();
    let curves = cfg
        .reversibility
        .t_ramp_ns
        .iter()
        .map(|&t| reversibility_curve(&device, cfg.protocol.ancilla, ns(t), cfg.reversibility.max_pairs))
        .collect::<Result<Vec<_>>>()?;
    for c in &curves {
        if c.fit.is_none() && cfg.reversibility.max_pairs >= 1 {
            warnings.push(format!("t_ramp = {:.0} ns: decay fit failed", c.t_ramp * 1e9));
        }
    }
    Ok(ReversibilityResult { curves, warnings })
}
