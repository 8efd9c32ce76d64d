//! Experiment configuration documents.
//!
//! A configuration is TOML with units carried in the field names
//! (`t_ramp_ns`, `reference_mhz`, ...). Frequencies are ordinary
//! frequencies; conversion to angular units happens when a [`Device`]
//! is built.
//!
//! [`Device`]: super::Device

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FIVE_QUBIT: &str = include_str!("../../presets/five_qubit.toml");
const SEVEN_QUBIT: &str = include_str!("../../presets/seven_qubit.toml");

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESET_NAMES: [&str; 2] = ["five_qubit", "seven_qubit"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AncillaPrep {
    Ground,
    Excited,
    #[default]
    Superposition,
}

/// How the N00N state is entangled for Ramsey interferometry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RamseyVariant {
    #[default]
    Inverted,
    Phonon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_n_max")]
    pub n_max: u8,
    pub j_bonds_mhz: Vec<f64>,
    pub u_mhz: Vec<f64>,
    pub ancilla_site: usize,
    pub loaded_sites: Vec<usize>,
}

fn default_n_max() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningTables {
    /// Large stagger where single-site rotations are selective.
    pub large_mhz: Vec<f64>,
    pub small_mhz: Vec<f64>,
    pub transistor_mhz: Vec<f64>,
    pub inverted_mhz: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverted_table_row_mhz: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub ancilla: AncillaPrep,
    pub variant: RamseyVariant,
    /// Conditional transport attaches a warning below this fidelity.
    pub fidelity_floor: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            ancilla: AncillaPrep::Superposition,
            variant: RamseyVariant::Inverted,
            fidelity_floor: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampConfig {
    pub t_ramp_ns: f64,
    pub tau_fraction: f64,
    /// Length of the linear step from the large to the small stagger;
    /// zero makes it instantaneous.
    pub jump_ns: f64,
}

impl Default for RampConfig {
    fn default() -> Self {
        Self {
            t_ramp_ns: 240.0,
            tau_fraction: 0.5,
            jump_ns: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseyConfig {
    pub hold_start_ns: f64,
    pub hold_step_ns: f64,
    pub hold_points: usize,
    pub reference_mhz: f64,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        Self {
            hold_start_ns: 0.0,
            hold_step_ns: 1.0,
            hold_points: 201,
            reference_mhz: 50.0,
        }
    }
}

impl RamseyConfig {
    pub fn hold_times_ns(&self) -> Vec<f64> {
        (0..self.hold_points)
            .map(|k| self.hold_start_ns + k as f64 * self.hold_step_ns)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingConfig {
    pub delta_mhz: Vec<f64>,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            delta_mhz: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub t_ramp_ns: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            t_ramp_ns: vec![4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1000.0, 2000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhononConfig {
    pub drive_site: usize,
    pub amplitude_mhz: f64,
    /// Drive frequencies; empty scans `scan_points` around the exact
    /// two-phonon resonance, `scan_span` wide in relative units.
    pub frequency_mhz: Vec<f64>,
    pub scan_points: usize,
    pub scan_span: f64,
    /// Drive durations for the chevron; empty picks an even grid.
    pub duration_ns: Vec<f64>,
    pub max_duration_ns: f64,
    pub duration_points: usize,
    pub edge_sigma_ns: f64,
    /// Swap length used by the phonon-assisted Ramsey variant; absent
    /// calibrates it from a duration scan at resonance.
    pub swap_duration_ns: Option<f64>,
    /// Drive frequency of the swap; absent uses the exact resonance.
    pub drive_mhz: Option<f64>,
    /// Number of drive durations in `[0, swap]` at which the conditional
    /// Ramsey fringe is measured; zero skips it.
    pub fringe_points: usize,
}

impl Default for PhononConfig {
    fn default() -> Self {
        Self {
            drive_site: 1,
            amplitude_mhz: 10.0,
            frequency_mhz: Vec::new(),
            scan_points: 21,
            scan_span: 0.4,
            duration_ns: Vec::new(),
            max_duration_ns: 400.0,
            duration_points: 41,
            edge_sigma_ns: 5.0,
            swap_duration_ns: None,
            drive_mhz: None,
            fringe_points: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoConfig {
    pub pairs: Vec<usize>,
    /// Run the sequence without the refocusing pulse as well.
    pub compare_plain: bool,
}

impl Default for EchoConfig {
    fn default() -> Self {
        Self {
            pairs: vec![1, 2, 3],
            compare_plain: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReversibilityConfig {
    pub max_pairs: usize,
    pub t_ramp_ns: Vec<f64>,
}

impl Default for ReversibilityConfig {
    fn default() -> Self {
        Self {
            max_pairs: 6,
            t_ramp_ns: vec![240.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Markovian decay and dephasing from the T1/T2 tables.
    #[serde(default = "yes")]
    pub decoherence: bool,
    #[serde(default = "yes")]
    pub readout: bool,
    pub t1_us: Vec<f64>,
    pub t2_us: Vec<f64>,
    pub sigma_mhz: Vec<f64>,
    pub readout_fidelity: Vec<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub shots: usize,
    pub seed: u64,
    pub dt_ns: f64,
    pub max_step_ns: f64,
    pub tolerance: f64,
    /// Largest doublon weight tolerated on a site before a rotation.
    pub rotation_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            shots: 200,
            seed: 1,
            dt_ns: 0.5,
            max_step_ns: 2.0,
            tolerance: 1e-8,
            rotation_threshold: 0.05,
        }
    }
}

/// Everything a protocol run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeConfig,
    pub detunings: DetuningTables,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub ramp: RampConfig,
    #[serde(default)]
    pub ramsey: RamseyConfig,
    #[serde(default)]
    pub sensing: SensingConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub phonon: PhononConfig,
    #[serde(default)]
    pub echo: EchoConfig,
    #[serde(default)]
    pub reversibility: ReversibilityConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml(preset_text(name)?)
    }

    /// Parse and validate.
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parse, apply `key=value` overrides, then validate.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(vec![format!("parse error: {e}")]))?;
        for (key, value) in overrides {
            apply_override(&mut doc, key, value)?;
        }
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.u_mhz.len()
    }

    /// Check every invariant and report all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let n = self.n_sites();
        let l = &self.lattice;
        if n < 2 {
            errs.push(format!("lattice.u_mhz: need at least 2 sites, got {n}"));
        }
        if l.j_bonds_mhz.len() + 1 != n {
            errs.push(format!(
                "lattice.j_bonds_mhz: expected {} bonds for {n} sites, got {}",
                n.saturating_sub(1),
                l.j_bonds_mhz.len()
            ));
        }
        if l.n_max < 1 {
            errs.push("lattice.n_max must be at least 1".into());
        }
        if l.ancilla_site >= n {
            errs.push(format!("lattice.ancilla_site = {} is not a site", l.ancilla_site));
        }
        let mut seen = vec![false; n];
        for &s in &l.loaded_sites {
            if s >= n {
                errs.push(format!("lattice.loaded_sites: {s} is not a site"));
            } else if seen[s] {
                errs.push(format!("lattice.loaded_sites: {s} listed twice"));
            } else {
                seen[s] = true;
            }
            if s == l.ancilla_site {
                errs.push("lattice.loaded_sites must not include the ancilla".into());
            }
        }
        let finite = |name: &str, v: &[f64], errs: &mut Vec<String>| {
            if v.iter().any(|x| !x.is_finite()) {
                errs.push(format!("{name} contains non-finite values"));
            }
        };
        finite("lattice.j_bonds_mhz", &l.j_bonds_mhz, &mut errs);
        finite("lattice.u_mhz", &l.u_mhz, &mut errs);
        let d = &self.detunings;
        let mut tables = vec![
            ("detunings.large_mhz", &d.large_mhz),
            ("detunings.small_mhz", &d.small_mhz),
            ("detunings.transistor_mhz", &d.transistor_mhz),
            ("detunings.inverted_mhz", &d.inverted_mhz),
        ];
        if let Some(row) = &d.inverted_table_row_mhz {
            tables.push(("detunings.inverted_table_row_mhz", row));
        }
        for (name, v) in tables {
            if v.len() != n {
                errs.push(format!("{name}: expected {n} entries, got {}", v.len()));
            }
            finite(name, v, &mut errs);
        }

        if !(self.protocol.fidelity_floor >= 0.0 && self.protocol.fidelity_floor <= 1.0) {
            errs.push("protocol.fidelity_floor must lie in [0, 1]".into());
        }
        if !(self.ramp.t_ramp_ns > 0.0) {
            errs.push("ramp.t_ramp_ns must be positive".into());
        }
        if !(0.4..=0.6).contains(&self.ramp.tau_fraction) {
            errs.push(format!("ramp.tau_fraction = {} outside [0.4, 0.6]", self.ramp.tau_fraction));
        }
        if !(self.ramp.jump_ns >= 0.0) {
            errs.push("ramp.jump_ns must be non-negative".into());
        }
        let r = &self.ramsey;
        if r.hold_points == 0 {
            errs.push("ramsey.hold_points: hold grid must be nonempty".into());
        }
        if !(r.hold_step_ns > 0.0) {
            errs.push("ramsey.hold_step_ns must be positive".into());
        }
        if !(r.hold_start_ns >= 0.0) {
            errs.push("ramsey.hold_start_ns must be non-negative".into());
        }
        finite("ramsey.reference_mhz", &[r.reference_mhz], &mut errs);
        finite("sensing.delta_mhz", &self.sensing.delta_mhz, &mut errs);
        if self.sweep.t_ramp_ns.iter().any(|t| !(*t > 0.0)) {
            errs.push("sweep.t_ramp_ns entries must be positive".into());
        }
        let p = &self.phonon;
        if p.drive_site >= n {
            errs.push(format!("phonon.drive_site = {} is not a site", p.drive_site));
        }
        if !(p.amplitude_mhz >= 0.0) {
            errs.push("phonon.amplitude_mhz must be non-negative".into());
        }
        if p.frequency_mhz.iter().any(|f| !(*f > 0.0)) {
            errs.push("phonon.frequency_mhz entries must be positive".into());
        }
        if p.frequency_mhz.is_empty() && (p.scan_points == 0 || !(p.scan_span >= 0.0)) {
            errs.push("phonon.scan_points must be positive and phonon.scan_span non-negative".into());
        }
        if p.duration_ns.iter().any(|t| !(*t >= 0.0)) {
            errs.push("phonon.duration_ns entries must be non-negative".into());
        }
        if p.duration_ns.is_empty() && (p.duration_points == 0 || !(p.max_duration_ns > 0.0)) {
            errs.push("phonon.duration_points and phonon.max_duration_ns must be positive".into());
        }
        if !(p.edge_sigma_ns >= 0.0) {
            errs.push("phonon.edge_sigma_ns must be non-negative".into());
        }
        if p.drive_mhz.is_some_and(|f| !(f > 0.0)) {
            errs.push("phonon.drive_mhz must be positive".into());
        }
        if p.swap_duration_ns.is_some_and(|t| !(t >= 0.0)) {
            errs.push("phonon.swap_duration_ns must be non-negative".into());
        }
        if self.echo.pairs.is_empty() || self.echo.pairs.contains(&0) {
            errs.push("echo.pairs must be nonempty and every entry at least 1".into());
        }
        if self.reversibility.t_ramp_ns.is_empty() || self.reversibility.t_ramp_ns.iter().any(|t| !(*t > 0.0)) {
            errs.push("reversibility.t_ramp_ns must be nonempty with positive entries".into());
        }

        let nz = &self.noise;
        for (name, v) in [
            ("noise.t1_us", &nz.t1_us),
            ("noise.t2_us", &nz.t2_us),
            ("noise.sigma_mhz", &nz.sigma_mhz),
            ("noise.readout_fidelity", &nz.readout_fidelity),
        ] {
            if v.len() != n {
                errs.push(format!("{name}: expected {n} entries, got {}", v.len()));
            }
        }
        for (i, (&t1, &t2)) in nz.t1_us.iter().zip(&nz.t2_us).enumerate() {
            if !(t1 > 0.0) {
                errs.push(format!("noise.t1_us[{i}] must be positive"));
            }
            if !(t2 > 0.0) || t2 > 2.0 * t1 {
                errs.push(format!("noise.t2_us[{i}] = {t2} must lie in (0, 2·T1]"));
            }
        }
        if nz.sigma_mhz.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            errs.push("noise.sigma_mhz entries must be finite and non-negative".into());
        }
        if nz.readout_fidelity.iter().any(|f| !(*f > 1.0 / 3.0 && *f <= 1.0)) {
            errs.push("noise.readout_fidelity entries must lie in (1/3, 1]".into());
        }

        let run = &self.run;
        if run.shots == 0 {
            errs.push("run.shots must be at least 1".into());
        }
        if !(run.dt_ns > 0.0) {
            errs.push("run.dt_ns must be positive".into());
        }
        if !(run.max_step_ns > 0.0) {
            errs.push("run.max_step_ns must be positive".into());
        }
        if !(run.tolerance > 0.0 && run.tolerance < 1.0) {
            errs.push("run.tolerance must lie in (0, 1)".into());
        }
        if !(run.rotation_threshold >= 0.0 && run.rotation_threshold < 1.0) {
            errs.push("run.rotation_threshold must lie in [0, 1)".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "five_qubit" | "5q" => Ok(FIVE_QUBIT),
        "seven_qubit" | "7q" => Ok(SEVEN_QUBIT),
        other => Err(Error::Config(vec![format!(
            "unknown preset `{other}` (known: {})",
            PRESET_NAMES.join(", ")
        )])),
    }
}

/// Parse an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    toml::from_str::<toml::Table>(&wrapped)
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Set `key` in `doc`. A dotted key addresses nested tables directly; a
/// bare key must name exactly one field among the top-level tables.
pub fn apply_override(doc: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let value = parse_value(raw.trim());
    let path: Vec<String> = if key.contains('.') {
        key.split('.').map(str::to_string).collect()
    } else if doc.contains_key(key) {
        vec![key.to_string()]
    } else {
        let owners: Vec<String> = known_tables()
            .iter()
            .filter(|(_, fields)| fields.contains(&key))
            .map(|(t, _)| t.to_string())
            .collect();
        match owners.as_slice() {
            [one] => vec![one.clone(), key.to_string()],
            [] => return Err(Error::Config(vec![format!("unknown configuration key `{key}`")])),
            many => {
                return Err(Error::Config(vec![format!(
                    "ambiguous key `{key}`: qualify it as one of {}",
                    many.iter().map(|t| format!("{t}.{key}")).collect::<Vec<_>>().join(", ")
                )]))
            }
        }
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(vec![format!("`{p}` in `{key}` is not a table")]))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

fn known_tables() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("lattice", vec!["name", "n_max", "j_bonds_mhz", "u_mhz", "ancilla_site", "loaded_sites"]),
        (
            "detunings",
            vec!["large_mhz", "small_mhz", "transistor_mhz", "inverted_mhz", "inverted_table_row_mhz"],
        ),
        ("protocol", vec!["ancilla", "variant", "fidelity_floor"]),
        ("ramp", vec!["t_ramp_ns", "tau_fraction", "jump_ns"]),
        ("ramsey", vec!["hold_start_ns", "hold_step_ns", "hold_points", "reference_mhz"]),
        ("sensing", vec!["delta_mhz"]),
        ("sweep", vec!["t_ramp_ns"]),
        (
            "phonon",
            vec![
                "drive_site",
                "amplitude_mhz",
                "frequency_mhz",
                "scan_points",
                "scan_span",
                "duration_ns",
                "max_duration_ns",
                "duration_points",
                "edge_sigma_ns",
                "swap_duration_ns",
                "drive_mhz",
                "fringe_points",
            ],
        ),
        ("echo", vec!["pairs", "compare_plain"]),
        ("reversibility", vec!["max_pairs", "t_ramp_ns"]),
        (
            "noise",
            vec!["enabled", "decoherence", "readout", "t1_us", "t2_us", "sigma_mhz", "readout_fidelity"],
        ),
        ("run", vec!["shots", "seed", "dt_ns", "max_step_ns", "tolerance", "rotation_threshold"]),
    ]
}
