//! Executable experiments. Each protocol builds its control sequences from
//! an [`ExperimentConfig`], runs noiseless or stochastic evolution and
//! returns typed records; [`run_protocol`] flattens them into tables.

mod config;
mod device;
mod echo;
mod phonon;
mod ramsey;
mod transport;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use config::{
    apply_override, preset_text, AncillaPrep, DetuningTables, EchoConfig, ExperimentConfig, LatticeConfig,
    NoiseConfig, PhononConfig, ProtocolConfig, RampConfig, RamseyConfig, RamseyVariant, ReversibilityConfig,
    RunConfig, SensingConfig, SweepConfig, PRESET_NAMES,
};
pub use device::{mirror, Device};
pub use echo::{
    echo_sequence, reversibility_curve, reversibility_sequence, run_echo, run_reversibility, EchoPoint, EchoRecord,
    EchoResult, ReversibilityCurve, ReversibilityResult,
};
pub use phonon::{
    calibrate_drive, drive_states, in_j_units, parabola_vertex, phonon_target, right_fraction, run_phonon_swap,
    transistor_state, ChevronPoint, PhononDrive, PhononResult, PhononTarget,
};
pub use ramsey::{
    coherent_fringe, measure_fringe, CoherentFringe, MeasuredFringe, mirrored_sites, noon_sequence, predict_fringe, run_noon_ramsey, run_ramp_sweep,
    run_sensing, sensing_hold, FringePrediction, HoldSequence, RamseyResult, SensingPoint, SensingResult,
    SweepPoint, SweepResult, SWEEP_PEAK_FLOOR,
};
pub use transport::{run_conditional_transport, transport_profile, TransportProfile, TransportResult};

use crate::error::{Error, Result};
use crate::units::{to_mhz, to_ns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    ConditionalTransport,
    Echo,
    NoonRamsey,
    PhononSwap,
    RampSweep,
    Reversibility,
    Sensing,
}

impl ProtocolKind {
    /// Alphabetical.
    pub const ALL: [ProtocolKind; 7] = [
        ProtocolKind::ConditionalTransport,
        ProtocolKind::Echo,
        ProtocolKind::NoonRamsey,
        ProtocolKind::PhononSwap,
        ProtocolKind::RampSweep,
        ProtocolKind::Reversibility,
        ProtocolKind::Sensing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::ConditionalTransport => "conditional-transport",
            ProtocolKind::Echo => "echo",
            ProtocolKind::NoonRamsey => "noon-ramsey",
            ProtocolKind::PhononSwap => "phonon-swap",
            ProtocolKind::RampSweep => "ramp-sweep",
            ProtocolKind::Reversibility => "reversibility",
            ProtocolKind::Sensing => "sensing",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ProtocolKind::ConditionalTransport => {
                "Ramp into the transistor configuration and report site densities for each ancilla state"
            }
            ProtocolKind::Echo => "Ramsey fringes after repeated entangle/disentangle pairs with and without a refocusing pulse",
            ProtocolKind::NoonRamsey => "Prepare the N00N state and record the ancilla Ramsey fringe and its spectrum",
            ProtocolKind::PhononSwap => "Drive a two-phonon swap across the fluid band; resonance scan and chevrons",
            ProtocolKind::RampSweep => "Ramsey spectra as a function of ramp time",
            ProtocolKind::Reversibility => "Loaded-site return probability after repeated entangle/disentangle pairs",
            ProtocolKind::Sensing => "Fringe frequency shift under opposite cluster detunings",
        }
    }

    /// Configuration fields the protocol reads beyond the lattice,
    /// detuning tables and run settings.
    pub fn required_fields(self) -> &'static [&'static str] {
        match self {
            ProtocolKind::ConditionalTransport => &["protocol.ancilla", "ramp.t_ramp_ns", "ramp.tau_fraction", "protocol.fidelity_floor"],
            ProtocolKind::Echo => &["ramp.t_ramp_ns", "ramsey.hold_points", "ramsey.reference_mhz", "echo.pairs", "noise"],
            ProtocolKind::NoonRamsey => &["protocol.variant", "ramp.t_ramp_ns", "ramsey.hold_points", "ramsey.reference_mhz"],
            ProtocolKind::PhononSwap => &["phonon.drive_site", "phonon.amplitude_mhz", "phonon.frequency_mhz", "phonon.duration_ns"],
            ProtocolKind::RampSweep => &["sweep.t_ramp_ns", "ramsey.hold_points", "ramsey.reference_mhz"],
            ProtocolKind::Reversibility => &["reversibility.max_pairs", "reversibility.t_ramp_ns", "noise"],
            ProtocolKind::Sensing => &["sensing.delta_mhz", "ramsey.hold_points", "ramsey.reference_mhz"],
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown protocol `{s}`")))
    }
}

/// Column-named numeric table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Flattened protocol output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub protocol: ProtocolKind,
    pub results: Table,
    pub spectrum: Option<Table>,
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

fn fringe_table(record: &crate::analysis::FringeRecord, prefix: &[f64], table: &mut Table) {
    for (k, (&t, &p)) in record.hold_times.iter().zip(&record.p1).enumerate() {
        let se = record.stderr.as_ref().map_or(0.0, |s| s[k]);
        let mut row = prefix.to_vec();
        row.extend([to_ns(t), p, se]);
        table.push(row);
    }
}

fn spectrum_rows(spec: &crate::analysis::FoldedSpectrum, prefix: &[f64], table: &mut Table) {
    for (f, a) in spec.frequencies.iter().zip(spec.magnitudes()) {
        let mut row = prefix.to_vec();
        row.extend([f * 1e-6, a]);
        table.push(row);
    }
}

pub fn run_protocol(kind: ProtocolKind, cfg: &ExperimentConfig) -> Result<ProtocolReport> {
    let mut summary = BTreeMap::new();
    let mut spectrum = None;
    let (results, warnings) = match kind {
        ProtocolKind::ConditionalTransport => {
            let r = run_conditional_transport(cfg)?;
            let mut t = Table::new(&["ancilla_excited", "site", "density"]);
            for p in &r.profiles {
                let tag = (p.ancilla == AncillaPrep::Excited) as u8 as f64;
                for (i, n) in p.density.iter().enumerate() {
                    t.push(vec![tag, i as f64, *n]);
                }
                let name = if tag == 1.0 { "excited" } else { "ground" };
                if let Some(f) = p.adiabatic_fidelity {
                    summary.insert(format!("adiabatic_fidelity_{name}"), f);
                }
                summary.insert(format!("loaded_overlap_{name}"), p.loaded_overlap);
                summary.insert(format!("total_density_{name}"), p.total);
            }
            (t, r.warnings)
        }
        ProtocolKind::NoonRamsey => {
            let r = run_noon_ramsey(cfg)?;
            let mut t = Table::new(&["dt_ns", "p1_mean", "p1_stderr"]);
            fringe_table(&r.record, &[], &mut t);
            let mut s = Table::new(&["frequency_mhz", "amplitude"]);
            spectrum_rows(&r.spectrum, &[], &mut s);
            spectrum = Some(s);
            summary.insert("dominant_mhz".into(), r.dominant.peak.frequency * 1e-6);
            summary.insert("refined_mhz".into(), r.frequency * 1e-6);
            summary.insert("predicted_signed_mhz".into(), r.prediction.signed_hz * 1e-6);
            summary.insert("predicted_folded_mhz".into(), r.prediction.folded_hz * 1e-6);
            if let Some(d) = r.drive {
                summary.insert("drive_mhz".into(), to_mhz(d.frequency));
                summary.insert("swap_duration_ns".into(), to_ns(d.duration));
            }
            (t, r.warnings)
        }
        ProtocolKind::Sensing => {
            let r = run_sensing(cfg)?;
            let mut t = Table::new(&["delta_mhz", "frequency_mhz", "shift_mhz"]);
            t.push(vec![0.0, r.baseline * 1e-6, 0.0]);
            for p in &r.points {
                t.push(vec![to_mhz(p.delta), p.frequency * 1e-6, p.shift * 1e-6]);
            }
            summary.insert("slope".into(), r.slope);
            summary.insert("signed_slope".into(), r.signed_slope);
            (t, r.warnings)
        }
        ProtocolKind::RampSweep => {
            let r = run_ramp_sweep(cfg)?;
            let mut t = Table::new(&["t_ramp_ns", "dominant_mhz", "peaks", "max_doublon"]);
            let mut s = Table::new(&["t_ramp_ns", "frequency_mhz", "amplitude"]);
            for p in &r.points {
                t.push(vec![
                    to_ns(p.t_ramp),
                    p.dominant.peak.frequency * 1e-6,
                    p.peaks.len() as f64,
                    p.max_doublon,
                ]);
                spectrum_rows(&p.spectrum, &[to_ns(p.t_ramp)], &mut s);
            }
            spectrum = Some(s);
            summary.insert("reference_mhz".into(), r.reference_hz * 1e-6);
            summary.insert("noon_folded_mhz".into(), r.prediction.folded_hz * 1e-6);
            (t, Vec::new())
        }
        ProtocolKind::PhononSwap => {
            let r = run_phonon_swap(cfg)?;
            let n_sites = cfg.n_sites();
            let mut cols = vec!["drive_mhz".to_string(), "duration_ns".into(), "transfer".into()];
            cols.extend((0..n_sites).map(|i| format!("n{i}")));
            let mut t = Table {
                columns: cols,
                rows: Vec::new(),
            };
            for c in &r.chevron {
                let mut row = vec![to_mhz(c.frequency), to_ns(c.duration), c.transfer];
                row.extend(&c.occupations);
                t.push(row);
            }
            let mut s = Table::new(&["drive_mhz", "transfer"]);
            for (f, x) in &r.scan {
                s.push(vec![to_mhz(*f), *x]);
            }
            spectrum = Some(s);
            let tg = &r.target;
            summary.insert("band_gap_mhz".into(), to_mhz(tg.gap));
            summary.insert("resonance_mhz".into(), to_mhz(tg.drive_frequency));
            summary.insert("resonance_over_j".into(), in_j_units(tg.drive_frequency, tg));
            summary.insert("free_fermion_over_j".into(), in_j_units(tg.free_fermion, tg));
            summary.insert("peak_mhz".into(), to_mhz(r.peak_frequency));
            summary.insert("swap_duration_ns".into(), to_ns(r.drive.duration));
            summary.insert("ground_max_change".into(), r.ground_max_change);
            for (d, f) in &r.fringe {
                summary.insert(format!("fringe_mhz_at_{:.0}ns", to_ns(*d)), f * 1e-6);
            }
            (t, Vec::new())
        }
        ProtocolKind::Echo => {
            let r = run_echo(cfg)?;
            let mut t = Table::new(&["pairs", "echo", "dt_ns", "p1_mean", "p1_stderr"]);
            let mut s = Table::new(&["pairs", "echo", "amplitude", "amplitude_stderr"]);
            for p in &r.points {
                let n = p.pairs as f64;
                fringe_table(&p.echo.record, &[n, 1.0], &mut t);
                s.push(vec![n, 1.0, p.echo.amplitude, p.echo.amplitude_se]);
                if let Some(plain) = &p.plain {
                    fringe_table(&plain.record, &[n, 0.0], &mut t);
                    s.push(vec![n, 0.0, plain.amplitude, plain.amplitude_se]);
                }
            }
            spectrum = Some(s);
            summary.insert("tone_mhz".into(), r.prediction.folded_hz * 1e-6);
            if let Some(fit) = &r.fit {
                summary.insert("epsilon".into(), fit.error_rate);
                summary.insert("epsilon_stderr".into(), fit.error_rate_se);
                summary.insert("amplitude".into(), fit.amplitude);
            }
            (t, r.warnings)
        }
        ProtocolKind::Reversibility => {
            let r = run_reversibility(cfg)?;
            let mut t = Table::new(&["t_ramp_ns", "pairs", "fidelity", "stderr"]);
            for c in &r.curves {
                for (k, (f, se)) in c.fidelity.iter().zip(&c.stderr).enumerate() {
                    t.push(vec![to_ns(c.t_ramp), k as f64, *f, *se]);
                }
                if let Some(fit) = &c.fit {
                    summary.insert(format!("epsilon_at_{:.0}ns", to_ns(c.t_ramp)), fit.error_rate);
                    summary.insert(format!("epsilon_stderr_at_{:.0}ns", to_ns(c.t_ramp)), fit.error_rate_se);
                }
            }
            (t, r.warnings)
        }
    };
    Ok(ProtocolReport {
        protocol: kind,
        results,
        spectrum,
        summary,
        warnings,
    })
}
