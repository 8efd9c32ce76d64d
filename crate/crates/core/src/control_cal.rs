//! Flux-control calibration: crosstalk matrices, transmon dispersion and the
//! inverse problem from target frequencies to bias currents.
//!
//! The dispersion model is the symmetric-transmon approximation with
//! synthetic parameters; it is not fitted to any device.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::schedule::SampledControls;

/// Condition-number cap used when none is given.
pub const DEFAULT_CONDITION_CAP: f64 = 1e6;

/// `M_ij = ∂Φ_i/∂I_j` in flux quanta per mA.
#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkMatrix {
    m: DMatrix<f64>,
}

impl CrosstalkMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return domain(format!("crosstalk matrix is {}x{}", m.nrows(), m.ncols()));
        }
        if let Some(i) = (0..m.nrows()).find(|&i| m[(i, i)] == 0.0) {
            return domain(format!("diagonal entry {i} is zero"));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return domain("crosstalk matrix has non-finite entries");
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Ratio of largest to smallest singular value.
    pub fn condition_number(&self) -> f64 {
        let sv = self.m.clone().singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Rows divided by their diagonal entries, the usual way crosstalk is
    /// displayed.
    pub fn row_normalized(&self) -> DMatrix<f64> {
        let mut out = self.m.clone();
        for i in 0..out.nrows() {
            let d = self.m[(i, i)];
            out.row_mut(i).iter_mut().for_each(|x| *x /= d);
        }
        out
    }

    /// Fluxes produced by bias currents.
    pub fn apply(&self, currents: &[f64]) -> Vec<f64> {
        (&self.m * DVector::from_column_slice(currents)).iter().copied().collect()
    }

    /// Whitespace-separated rows, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.m.nrows() {
            let row: Vec<String> = self.m.row(i).iter().map(|x| format!("{x:.17e}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parse rows of whitespace- or comma-separated numbers. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Domain(format!("'{t}': {e}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return domain("crosstalk text is not a square matrix");
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

/// `M_ij = (∂ω_i/∂I_j) / (∂ω_i/∂Φ_i)`.
pub fn build_crosstalk(slopes: &DMatrix<f64>, flux_sensitivity: &[f64]) -> Result<CrosstalkMatrix> {
    if !slopes.is_square() || slopes.nrows() != flux_sensitivity.len() {
        return domain(format!(
            "slopes are {}x{}, sensitivities have {} entries",
            slopes.nrows(),
            slopes.ncols(),
            flux_sensitivity.len()
        ));
    }
    if let Some(i) = flux_sensitivity.iter().position(|&s| s == 0.0) {
        return domain(format!(
            "site {i} has zero flux sensitivity (biased at a sweet spot); its crosstalk is undefined"
        ));
    }
    let m = DMatrix::from_fn(slopes.nrows(), slopes.ncols(), |i, j| slopes[(i, j)] / flux_sensitivity[i]);
    CrosstalkMatrix::new(m)
}

/// Bias currents `I = M⁻¹ Φ` producing the target fluxes.
pub fn invert_crosstalk(m: &CrosstalkMatrix, target_flux: &[f64], condition_cap: f64) -> Result<Vec<f64>> {
    if target_flux.len() != m.dim() {
        return domain(format!("{} fluxes for a {}-site matrix", target_flux.len(), m.dim()));
    }
    let cond = m.condition_number();
    if !(cond <= condition_cap) {
        return Err(Error::Numeric(format!(
            "crosstalk matrix condition number {cond:.3e} exceeds cap {condition_cap:.1e}"
        )));
    }
    let lu = m.matrix().clone().lu();
    let x = lu
        .solve(&DVector::from_column_slice(target_flux))
        .ok_or_else(|| Error::Numeric(format!("singular crosstalk matrix (condition {cond:.3e})")))?;
    Ok(x.iter().copied().collect())
}

/// `ω(Φ) = (ω_max + c)·√|cos(πΦ/Φ₀)| − c` for one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionModel {
    /// Sweet-spot frequency (rad/s).
    pub omega_max: f64,
    /// Charging-energy scale (rad/s).
    pub charging: f64,
    /// Flux period in flux quanta.
    pub period: f64,
}

impl DispersionModel {
    pub fn new(omega_max: f64, charging: f64) -> Self {
        Self {
            omega_max,
            charging,
            period: 1.0,
        }
    }

    pub fn frequency(&self, flux: f64) -> f64 {
        (self.omega_max + self.charging) * (PI * flux / self.period).cos().abs().sqrt() - self.charging
    }

    /// `dω/dΦ` by central difference.
    pub fn slope(&self, flux: f64) -> f64 {
        let h = 1e-7 * self.period;
        (self.frequency(flux + h) - self.frequency(flux - h)) / (2.0 * h)
    }

    /// Frequencies reachable on the principal branch `[0, Φ₀/2]`.
    pub fn tuning_range(&self) -> (f64, f64) {
        (self.frequency(0.5 * self.period), self.omega_max)
    }
}

/// Smallest non-negative flux with `ω(Φ) = target`, by bisection.
pub fn flux_for_frequency(model: &DispersionModel, target: f64) -> Result<f64> {
    let (lo_w, hi_w) = model.tuning_range();
    if !(target >= lo_w && target <= hi_w) {
        return domain(format!(
            "target {target:.6e} rad/s outside tuning range [{lo_w:.6e}, {hi_w:.6e}]"
        ));
    }
    let (mut a, mut b) = (0.0, 0.5 * model.period);
    let tol = 2.0 * PI * 1.0; // 1 Hz
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let w = model.frequency(mid);
        if (w - target).abs() < tol || b - a < 1e-15 {
            return Ok(mid);
        }
        // Frequency decreases with flux on the principal branch.
        if w > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Single-pole flux-line response `y[k] = (1 − g)·x[k] + g·y[k−1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePoleKernel {
    pub pole: f64,
}

impl SinglePoleKernel {
    pub fn new(pole: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&pole) {
            return domain(format!("pole must lie in [0, 1), got {pole}"));
        }
        Ok(Self { pole })
    }

    /// What the line delivers for an input series, starting from `initial`.
    pub fn respond(&self, input: &[f64], initial: f64) -> Vec<f64> {
        let g = self.pole;
        let mut y = initial;
        input
            .iter()
            .map(|&x| {
                y = (1.0 - g) * x + g * y;
                y
            })
            .collect()
    }

    /// Input that makes the line deliver `target`.
    pub fn predistort(&self, target: &[f64], initial: f64) -> Vec<f64> {
        let g = self.pole;
        let mut prev = initial;
        target
            .iter()
            .map(|&y| {
                let x = (y - g * prev) / (1.0 - g);
                prev = y;
                x
            })
            .collect()
    }
}

/// Pre-distort every site of a sampled block that has a kernel. Each site's
/// line is assumed settled at its first sample.
pub fn predistort_controls(controls: &SampledControls, kernels: &[Option<SinglePoleKernel>]) -> Result<SampledControls> {
    if kernels.len() != controls.n_sites() {
        return domain(format!("{} kernels for {} sites", kernels.len(), controls.n_sites()));
    }
    let n = controls.n_samples();
    let mut columns: Vec<Vec<f64>> = (0..controls.n_sites())
        .map(|i| (0..n).map(|k| controls.sample(k)[i]).collect())
        .collect();
    for (col, kernel) in columns.iter_mut().zip(kernels) {
        if let (Some(k), Some(&first)) = (kernel, col.first()) {
            *col = k.predistort(col, first);
        }
    }
    let mut out = SampledControls::new(controls.dt(), controls.n_sites());
    let mut row = vec![0.0; controls.n_sites()];
    let mut events = controls.events().iter().peekable();
    for k in 0..n {
        while let Some((_, e)) = events.next_if(|(idx, _)| *idx == k) {
            out.push_event(e.clone());
        }
        for (i, r) in row.iter_mut().enumerate() {
            *r = columns[i][k];
        }
        out.push_sample(&row);
    }
    for (_, e) in events {
        out.push_event(e.clone());
    }
    Ok(out)
}
