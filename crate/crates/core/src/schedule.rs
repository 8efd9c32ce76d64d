//! Declarative control programs and their compilation to sampled detunings.
//!
//! A [`Schedule`] is an ordered list of [`Segment`]s. Compiling it yields
//! [`SampledControls`]: per-site detunings at the midpoints of uniform sample
//! intervals plus zero-duration rotation and phase events.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fock::{CompositeState, SectorRegistry};
use crate::units::{mhz, ns, to_mhz, to_ns};

/// Shape of an exponential ramp.
///
/// `Approach` moves fast first and settles onto the end point, the form used
/// when ramping into lattice degeneracy. `Depart` is its exact time mirror:
/// slow first, fast at the end.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampProfile {
    #[default]
    Approach,
    Depart,
}

impl RampProfile {
    pub fn flipped(self) -> Self {
        match self {
            RampProfile::Approach => RampProfile::Depart,
            RampProfile::Depart => RampProfile::Approach,
        }
    }
}

/// One step of a control program. Times in seconds, rates in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Hold {
        duration: f64,
        detunings: Vec<f64>,
    },
    ExpRamp {
        duration: f64,
        start: Vec<f64>,
        end: Vec<f64>,
        tau: f64,
        profile: RampProfile,
        /// Skip the `tau ∈ [0.4, 0.6]·duration` check.
        tau_override: bool,
    },
    SiteModulation {
        site: usize,
        amplitude: f64,
        frequency: f64,
        duration: f64,
        edge_sigma: f64,
        base: Vec<f64>,
    },
    InstantRotation {
        site: usize,
        angle: f64,
        phase: f64,
    },
    VirtualPhase {
        site: usize,
        phase: f64,
    },
    ReadoutMarker {
        label: String,
    },
}

/// Default flat-top edge width.
pub const DEFAULT_EDGE_SIGMA: f64 = 5e-9;

impl Segment {
    pub fn duration(&self) -> f64 {
        match self {
            Segment::Hold { duration, .. }
            | Segment::ExpRamp { duration, .. }
            | Segment::SiteModulation { duration, .. } => *duration,
            _ => 0.0,
        }
    }

    /// Exponential ramp with `tau = tau_fraction · duration`.
    pub fn ramp(duration: f64, start: &[f64], end: &[f64], tau_fraction: f64, profile: RampProfile) -> Self {
        Segment::ExpRamp {
            duration,
            start: start.to_vec(),
            end: end.to_vec(),
            tau: tau_fraction * duration,
            profile,
            tau_override: false,
        }
    }

    fn validate(&self, n_sites: usize) -> std::result::Result<(), String> {
        let check_len = |name: &str, v: &[f64]| {
            if v.len() != n_sites {
                Err(format!("{name} has {} entries for {n_sites} sites", v.len()))
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(format!("{name} contains non-finite values"))
            } else {
                Ok(())
            }
        };
        let check_site = |site: usize| {
            if site >= n_sites {
                Err(format!("site {site} out of range for {n_sites} sites"))
            } else {
                Ok(())
            }
        };
        if !(self.duration() >= 0.0) || !self.duration().is_finite() {
            return Err(format!("duration must be finite and non-negative, got {}", self.duration()));
        }
        match self {
            Segment::Hold { detunings, .. } => check_len("hold detunings", detunings),
            Segment::ExpRamp {
                duration,
                start,
                end,
                tau,
                tau_override,
                ..
            } => {
                check_len("ramp start", start)?;
                check_len("ramp end", end)?;
                if !(*tau > 0.0) {
                    return Err(format!("ramp timescale must be positive, got {tau}"));
                }
                let frac = tau / duration;
                if !tau_override && *duration > 0.0 && !(0.4 - 1e-9..=0.6 + 1e-9).contains(&frac) {
                    return Err(format!(
                        "ramp timescale is {frac:.3} of the ramp duration; allowed range is [0.4, 0.6] unless overridden"
                    ));
                }
                Ok(())
            }
            Segment::SiteModulation {
                site, edge_sigma, base, amplitude, frequency, ..
            } => {
                check_site(*site)?;
                check_len("modulation base", base)?;
                if !(*edge_sigma >= 0.0) || !amplitude.is_finite() || !frequency.is_finite() {
                    return Err("modulation amplitude, frequency and edge must be finite, edge ≥ 0".into());
                }
                Ok(())
            }
            Segment::InstantRotation { site, angle, phase } => {
                check_site(*site)?;
                if !angle.is_finite() || !phase.is_finite() {
                    return Err("rotation angle and phase must be finite".into());
                }
                Ok(())
            }
            Segment::VirtualPhase { site, phase } => {
                check_site(*site)?;
                if !phase.is_finite() {
                    return Err("virtual phase must be finite".into());
                }
                Ok(())
            }
            Segment::ReadoutMarker { .. } => Ok(()),
        }
    }

    /// Time-reversed counterpart of this segment.
    ///
    /// Ramps swap their end points and flip profile, which is an exact time
    /// reversal. Modulations keep their phase reference and are only reversed
    /// in envelope.
    pub fn mirrored(&self) -> Segment {
        match self.clone() {
            Segment::ExpRamp {
                duration,
                start,
                end,
                tau,
                profile,
                tau_override,
            } => Segment::ExpRamp {
                duration,
                start: end,
                end: start,
                tau,
                profile: profile.flipped(),
                tau_override,
            },
            Segment::InstantRotation { site, angle, phase } => Segment::InstantRotation {
                site,
                angle: -angle,
                phase,
            },
            Segment::VirtualPhase { site, phase } => Segment::VirtualPhase { site, phase: -phase },
            other => other,
        }
    }
}

/// Ordered control program for a lattice of `n_sites`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    n_sites: usize,
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(n_sites: usize) -> Self {
        Self {
            n_sites,
            segments: Vec::new(),
        }
    }

    pub fn from_segments(n_sites: usize, segments: Vec<Segment>) -> Result<Self> {
        let mut s = Self::new(n_sites);
        for seg in segments {
            s.push(seg)?;
        }
        Ok(s)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn push(&mut self, segment: Segment) -> Result<&mut Self> {
        segment.validate(self.n_sites).map_err(Error::Domain)?;
        self.segments.push(segment);
        Ok(self)
    }

    pub fn extend(&mut self, other: &Schedule) -> Result<&mut Self> {
        if other.n_sites != self.n_sites {
            return domain("cannot join schedules for different lattices");
        }
        self.segments.extend(other.segments.iter().cloned());
        Ok(self)
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    /// Time-reversed program: segments in reverse order, each mirrored.
    pub fn mirrored(&self) -> Schedule {
        Schedule {
            n_sites: self.n_sites,
            segments: self.segments.iter().rev().map(Segment::mirrored).collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        let doc = ScheduleDoc {
            n_sites: self.n_sites,
            segment: self.segments.iter().map(SegmentDoc::from).collect(),
        };
        toml::to_string(&doc).expect("schedule documents always serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: ScheduleDoc =
            toml::from_str(text).map_err(|e| Error::Domain(format!("schedule document: {e}")))?;
        Self::from_segments(doc.n_sites, doc.segment.into_iter().map(Segment::from).collect())
    }
}

/// `start + (end − start)·(1 − e^{−t/τ})/(1 − e^{−t_ramp/τ})`.
pub fn exp_ramp_eval(t: f64, t_ramp: f64, tau: f64, start: f64, end: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return domain(format!("ramp timescale must be positive, got {tau}"));
    }
    if t < -1e-15 || t > t_ramp * (1.0 + 1e-12) + 1e-15 {
        return domain(format!("t = {t} outside [0, {t_ramp}]"));
    }
    Ok(start + (end - start) * ramp_fraction(t.clamp(0.0, t_ramp), t_ramp, tau))
}

fn ramp_fraction(t: f64, t_ramp: f64, tau: f64) -> f64 {
    if t_ramp <= 0.0 {
        return 1.0;
    }
    -(-t / tau).exp_m1() / -(-t_ramp / tau).exp_m1()
}

fn profile_fraction(t: f64, t_ramp: f64, tau: f64, profile: RampProfile) -> f64 {
    match profile {
        RampProfile::Approach => ramp_fraction(t, t_ramp, tau),
        RampProfile::Depart => 1.0 - ramp_fraction(t_ramp - t, t_ramp, tau),
    }
}

/// Flat-top envelope with Gaussian edges of width `sigma`, truncated at ±2σ.
pub fn flat_top_envelope(t: f64, duration: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 1.0;
    }
    let edge = |u: f64| {
        if u >= 2.0 * sigma {
            1.0
        } else {
            let x = (u - 2.0 * sigma) / sigma;
            (-0.5 * x * x).exp()
        }
    };
    edge(t).min(edge(duration - t))
}

/// Zero-duration operation placed between samples.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlEvent {
    Rotation { site: usize, angle: f64, phase: f64 },
    VirtualPhase { site: usize, phase: f64 },
    Marker(String),
}

/// Detunings sampled on a uniform grid plus instantaneous events.
///
/// An event with index `k` acts after sample `k − 1` and before sample `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledControls {
    dt: f64,
    n_sites: usize,
    samples: Vec<f64>,
    events: Vec<(usize, ControlEvent)>,
}

impl SampledControls {
    pub fn new(dt: f64, n_sites: usize) -> Self {
        Self {
            dt,
            n_sites,
            samples: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_samples(&self) -> usize {
        if self.n_sites == 0 {
            0
        } else {
            self.samples.len() / self.n_sites
        }
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 * self.dt
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k * self.n_sites..(k + 1) * self.n_sites]
    }

    pub fn events(&self) -> &[(usize, ControlEvent)] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty() && self.events.is_empty()
    }

    pub fn push_sample(&mut self, detunings: &[f64]) {
        assert_eq!(detunings.len(), self.n_sites, "sample width");
        self.samples.extend_from_slice(detunings);
    }

    /// Append `count` copies of the same sample.
    pub fn push_constant(&mut self, detunings: &[f64], count: usize) {
        for _ in 0..count {
            self.push_sample(detunings);
        }
    }

    /// Queue an event at the current end of the sample list.
    pub fn push_event(&mut self, event: ControlEvent) {
        self.events.push((self.n_samples(), event));
    }

    pub fn events_mut(&mut self) -> &mut Vec<(usize, ControlEvent)> {
        &mut self.events
    }

    /// Concatenate another block sampled at the same step.
    pub fn append(&mut self, other: &SampledControls) -> Result<()> {
        if other.n_sites != self.n_sites || (other.dt - self.dt).abs() > 1e-12 * self.dt {
            return domain("cannot append controls with a different lattice or sample step");
        }
        let offset = self.n_samples();
        self.samples.extend_from_slice(&other.samples);
        self.events
            .extend(other.events.iter().map(|(k, e)| (k + offset, e.clone())));
        Ok(())
    }

    /// Copy with a constant per-site offset added to every sample.
    pub fn with_offsets(&self, offsets: &[f64]) -> SampledControls {
        let mut out = self.clone();
        if offsets.iter().all(|&o| o == 0.0) {
            return out;
        }
        for row in out.samples.chunks_mut(self.n_sites) {
            for (d, o) in row.iter_mut().zip(offsets) {
                *d += o;
            }
        }
        out
    }

    /// `∫ δ_site dt` over the whole block.
    pub fn detuning_integral(&self, site: usize) -> f64 {
        self.samples
            .chunks(self.n_sites)
            .map(|row| row[site])
            .sum::<f64>()
            * self.dt
    }

    /// `∫ δ_site dt` over samples `[0, k)`.
    pub fn detuning_integral_until(&self, site: usize, k: usize) -> f64 {
        self.samples
            .chunks(self.n_sites)
            .take(k)
            .map(|row| row[site])
            .sum::<f64>()
            * self.dt
    }

    pub fn last_sample(&self) -> Option<&[f64]> {
        let n = self.n_samples();
        (n > 0).then(|| self.sample(n - 1))
    }
}

/// Sample a schedule at interval midpoints.
///
/// Segment durations are rounded to a whole number of samples.
pub fn compile(schedule: &Schedule, dt: f64) -> Result<SampledControls> {
    if !(dt > 0.0) || !dt.is_finite() {
        return domain(format!("sample step must be positive, got {dt}"));
    }
    let n_sites = schedule.n_sites();
    let mut out = SampledControls::new(dt, n_sites);
    let mut row = vec![0.0; n_sites];
    for seg in schedule.segments() {
        let n = (seg.duration() / dt).round() as usize;
        match seg {
            Segment::Hold { detunings, .. } => out.push_constant(detunings, n),
            Segment::ExpRamp {
                duration,
                start,
                end,
                tau,
                profile,
                ..
            } => {
                for k in 0..n {
                    let t = ((k as f64 + 0.5) * dt).min(*duration);
                    let s = profile_fraction(t, *duration, *tau, *profile);
                    for (i, r) in row.iter_mut().enumerate() {
                        *r = start[i] + (end[i] - start[i]) * s;
                    }
                    out.push_sample(&row);
                }
            }
            Segment::SiteModulation {
                site,
                amplitude,
                frequency,
                duration,
                edge_sigma,
                base,
            } => {
                for k in 0..n {
                    let t = (k as f64 + 0.5) * dt;
                    row.copy_from_slice(base);
                    row[*site] += amplitude * flat_top_envelope(t, *duration, *edge_sigma) * (frequency * t).cos();
                    out.push_sample(&row);
                }
            }
            Segment::InstantRotation { site, angle, phase } => out.push_event(ControlEvent::Rotation {
                site: *site,
                angle: *angle,
                phase: *phase,
            }),
            Segment::VirtualPhase { site, phase } => out.push_event(ControlEvent::VirtualPhase {
                site: *site,
                phase: *phase,
            }),
            Segment::ReadoutMarker { label } => out.push_event(ControlEvent::Marker(label.clone())),
        }
    }
    Ok(out)
}

/// Microwave rotation on one site, restricted to the 0↔1 transition:
/// `[[cos θ/2, −i e^{−iφ} sin θ/2], [−i e^{iφ} sin θ/2, cos θ/2]]`.
///
/// Components with two photons on `site` are left untouched, which is only a
/// faithful model while their weight is negligible; above `threshold` the
/// call fails.
pub fn apply_rotation(
    state: &CompositeState,
    registry: &SectorRegistry,
    site: usize,
    angle: f64,
    phase: f64,
    threshold: f64,
) -> Result<CompositeState> {
    if site >= registry.n_sites() {
        return domain(format!("site {site} out of range"));
    }
    let doublon = doublon_weight(state, registry, site);
    if doublon > threshold {
        return Err(Error::ModelValidity(format!(
            "site {site} carries {doublon:.3e} weight in its doubly occupied level (threshold {threshold:.1e}); rotation is not selective"
        )));
    }
    let c = (0.5 * angle).cos();
    let s = (0.5 * angle).sin();
    let u01 = C64::new(0.0, -1.0) * C64::from_polar(s, -phase);
    let u10 = C64::new(0.0, -1.0) * C64::from_polar(s, phase);
    let zero = C64::new(0.0, 0.0);

    let present = state.sector_numbers();
    let mut lower: Vec<usize> = present
        .iter()
        .flat_map(|&n| [n.checked_sub(1), Some(n)])
        .flatten()
        .filter(|&n| n < registry.max_particles())
        .collect();
    lower.sort_unstable();
    lower.dedup();

    let mut out = state.clone();
    for &n in &lower {
        let (b0, b1) = (registry.basis(n), registry.basis(n + 1));
        let src0 = state.sector(n);
        let src1 = state.sector(n + 1);
        let mut dst0 = out.sector(n).map_or_else(|| vec![zero; b0.dim()], |v| v.to_vec());
        let mut dst1 = out.sector(n + 1).map_or_else(|| vec![zero; b1.dim()], |v| v.to_vec());
        for (k0, fs) in b0.states().iter().enumerate() {
            if fs.get(site) != 0 {
                continue;
            }
            let k1 = b1
                .index_of(&fs.with(site, 1))
                .expect("partner state exists in the next sector");
            let a0 = src0.map_or(zero, |v| v[k0]);
            let a1 = src1.map_or(zero, |v| v[k1]);
            dst0[k0] = a0 * c + u01 * a1;
            dst1[k1] = u10 * a0 + a1 * c;
        }
        out.set_sector(n, dst0);
        out.set_sector(n + 1, dst1);
    }
    Ok(out)
}

/// Weight of all components with two or more photons on `site`.
pub fn doublon_weight(state: &CompositeState, registry: &SectorRegistry, site: usize) -> f64 {
    state
        .sectors()
        .map(|(n, amps)| {
            let sector = registry.sector(n);
            amps.iter()
                .enumerate()
                .filter(|(k, _)| sector.occupation(*k, site) >= 2)
                .map(|(_, a)| a.norm_sqr())
                .sum::<f64>()
        })
        .sum()
}

/// Multiply every amplitude by `e^{i·phase·n_site}`.
pub fn apply_virtual_phase(
    state: &CompositeState,
    registry: &SectorRegistry,
    site: usize,
    phase: f64,
) -> CompositeState {
    let mut out = state.clone();
    let factors: Vec<C64> = (0..=registry.lattice().n_max())
        .map(|n| C64::from_polar(1.0, phase * n as f64))
        .collect();
    for (n, amps) in out.sectors_mut() {
        let sector = registry.sector(n);
        for (k, a) in amps.iter_mut().enumerate() {
            *a *= factors[sector.occupation(k, site) as usize];
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleDoc {
    n_sites: usize,
    #[serde(default)]
    segment: Vec<SegmentDoc>,
}

fn default_edge_ns() -> f64 {
    to_ns(DEFAULT_EDGE_SIGMA)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
enum SegmentDoc {
    Hold {
        duration_ns: f64,
        detunings_mhz: Vec<f64>,
    },
    ExpRamp {
        duration_ns: f64,
        start_mhz: Vec<f64>,
        end_mhz: Vec<f64>,
        tau_ns: f64,
        #[serde(default)]
        profile: RampProfile,
        #[serde(default)]
        tau_override: bool,
    },
    SiteModulation {
        site: usize,
        amplitude_mhz: f64,
        frequency_mhz: f64,
        duration_ns: f64,
        #[serde(default = "default_edge_ns")]
        edge_sigma_ns: f64,
        base_mhz: Vec<f64>,
    },
    InstantRotation {
        site: usize,
        angle_rad: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    VirtualPhase {
        site: usize,
        phase_rad: f64,
    },
    ReadoutMarker {
        label: String,
    },
}

fn to_mhz_vec(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(to_mhz).collect()
}

fn from_mhz_vec(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(mhz).collect()
}

impl From<&Segment> for SegmentDoc {
    fn from(s: &Segment) -> Self {
        match s {
            Segment::Hold { duration, detunings } => SegmentDoc::Hold {
                duration_ns: to_ns(*duration),
                detunings_mhz: to_mhz_vec(detunings),
            },
            Segment::ExpRamp {
                duration,
                start,
                end,
                tau,
                profile,
                tau_override,
            } => SegmentDoc::ExpRamp {
                duration_ns: to_ns(*duration),
                start_mhz: to_mhz_vec(start),
                end_mhz: to_mhz_vec(end),
                tau_ns: to_ns(*tau),
                profile: *profile,
                tau_override: *tau_override,
            },
            Segment::SiteModulation {
                site,
                amplitude,
                frequency,
                duration,
                edge_sigma,
                base,
            } => SegmentDoc::SiteModulation {
                site: *site,
                amplitude_mhz: to_mhz(*amplitude),
                frequency_mhz: to_mhz(*frequency),
                duration_ns: to_ns(*duration),
                edge_sigma_ns: to_ns(*edge_sigma),
                base_mhz: to_mhz_vec(base),
            },
            Segment::InstantRotation { site, angle, phase } => SegmentDoc::InstantRotation {
                site: *site,
                angle_rad: *angle,
                phase_rad: *phase,
            },
            Segment::VirtualPhase { site, phase } => SegmentDoc::VirtualPhase {
                site: *site,
                phase_rad: *phase,
            },
            Segment::ReadoutMarker { label } => SegmentDoc::ReadoutMarker { label: label.clone() },
        }
    }
}

impl From<SegmentDoc> for Segment {
    fn from(d: SegmentDoc) -> Self {
        match d {
            SegmentDoc::Hold {
                duration_ns,
                detunings_mhz,
            } => Segment::Hold {
                duration: ns(duration_ns),
                detunings: from_mhz_vec(&detunings_mhz),
            },
            SegmentDoc::ExpRamp {
                duration_ns,
                start_mhz,
                end_mhz,
                tau_ns,
                profile,
                tau_override,
            } => Segment::ExpRamp {
                duration: ns(duration_ns),
                start: from_mhz_vec(&start_mhz),
                end: from_mhz_vec(&end_mhz),
                tau: ns(tau_ns),
                profile,
                tau_override,
            },
            SegmentDoc::SiteModulation {
                site,
                amplitude_mhz,
                frequency_mhz,
                duration_ns,
                edge_sigma_ns,
                base_mhz,
            } => Segment::SiteModulation {
                site,
                amplitude: mhz(amplitude_mhz),
                frequency: mhz(frequency_mhz),
                duration: ns(duration_ns),
                edge_sigma: ns(edge_sigma_ns),
                base: from_mhz_vec(&base_mhz),
            },
            SegmentDoc::InstantRotation {
                site,
                angle_rad,
                phase_rad,
            } => Segment::InstantRotation {
                site,
                angle: angle_rad,
                phase: phase_rad,
            },
            SegmentDoc::VirtualPhase { site, phase_rad } => Segment::VirtualPhase { site, phase: phase_rad },
            SegmentDoc::ReadoutMarker { label } => Segment::ReadoutMarker { label },
        }
    }
}
