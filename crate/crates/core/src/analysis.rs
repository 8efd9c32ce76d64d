//! Fringe spectra, peak extraction and decay fits.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{domain, Error, Result};

/// Ancilla excited-state probability against hold time.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeRecord {
    /// Hold times in seconds, uniformly spaced.
    pub hold_times: Vec<f64>,
    pub p1: Vec<f64>,
    /// Standard error of each point when it is a finite-shot estimate.
    pub stderr: Option<Vec<f64>>,
}

impl FringeRecord {
    pub fn new(hold_times: Vec<f64>, p1: Vec<f64>) -> Self {
        Self {
            hold_times,
            p1,
            stderr: None,
        }
    }

    pub fn len(&self) -> usize {
        self.p1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p1.is_empty()
    }

    /// Sample interval, checking that the grid is uniform.
    pub fn uniform_step(&self) -> Result<f64> {
        if self.hold_times.len() != self.p1.len() {
            return domain("hold times and probabilities differ in length");
        }
        if self.hold_times.len() < 2 {
            return domain("need at least two hold times");
        }
        let dt = self.hold_times[1] - self.hold_times[0];
        if !(dt > 0.0) {
            return domain("hold times must increase");
        }
        for w in self.hold_times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return domain("hold-time grid is not uniform");
            }
        }
        Ok(dt)
    }

    fn centred(&self) -> Vec<f64> {
        let mean = self.p1.iter().sum::<f64>() / self.p1.len() as f64;
        self.p1.iter().map(|p| p - mean).collect()
    }
}

/// One-sided spectrum of a real record on `[0, Nyquist]`.
///
/// Interior bins carry a √2 factor so that `Σ|amplitude|²` equals the mean
/// square of the centred signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedSpectrum {
    /// Bin frequencies in Hz.
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<C64>,
    pub dt: f64,
    pub n_samples: usize,
}

impl FoldedSpectrum {
    pub fn nyquist(&self) -> f64 {
        0.5 / self.dt
    }

    pub fn resolution(&self) -> f64 {
        1.0 / (self.n_samples as f64 * self.dt)
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm()).collect()
    }
}

/// DFT of the mean-subtracted record.
pub fn fringe_spectrum(record: &FringeRecord) -> Result<FoldedSpectrum> {
    let dt = record.uniform_step()?;
    let n = record.len();
    let mut buf: Vec<C64> = record.centred().into_iter().map(|x| C64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let amplitudes = (0..=half)
        .map(|k| {
            let interior = k > 0 && !(n % 2 == 0 && k == half);
            let scale = if interior { 2f64.sqrt() } else { 1.0 } / n as f64;
            buf[k] * scale
        })
        .collect();
    let frequencies = (0..=half).map(|k| k as f64 / (n as f64 * dt)).collect();
    Ok(FoldedSpectrum {
        frequencies,
        amplitudes,
        dt,
        n_samples: n,
    })
}

/// Alias of frequency `f` (Hz, any sign) into `[0, 1/(2dt)]`.
pub fn fold_frequency(f: f64, dt: f64) -> f64 {
    let fs = 1.0 / dt;
    let r = f.rem_euclid(fs);
    if r > 0.5 * fs {
        fs - r
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub frequency: f64,
    pub amplitude: f64,
    pub bin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominant {
    pub peak: Peak,
    /// A second, non-adjacent bin within 1 % of the maximum.
    pub tie: Option<Peak>,
}

fn interpolated_peak(spec: &FoldedSpectrum, mags: &[f64], k: usize) -> Peak {
    let mut offset = 0.0;
    if k > 0 && k + 1 < mags.len() && mags[k - 1] > 0.0 && mags[k + 1] > 0.0 && mags[k] > 0.0 {
        let (a, b, c) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Peak {
        frequency: (k as f64 + offset) * spec.resolution(),
        amplitude: mags[k],
        bin: k,
    }
}

/// Strongest bin (ignoring DC), refined by a parabola through the
/// log-magnitudes of its neighbours.
pub fn dominant_frequency(spec: &FoldedSpectrum) -> Result<Dominant> {
    let mags = spec.magnitudes();
    if mags.len() < 2 {
        return domain("spectrum has no non-DC bins");
    }
    let k = (1..mags.len())
        .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
        .expect("nonempty");
    let tie = (1..mags.len())
        .filter(|&j| j.abs_diff(k) > 1 && mags[j] >= 0.99 * mags[k] && mags[k] > 0.0)
        .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
        .map(|j| interpolated_peak(spec, &mags, j));
    Ok(Dominant {
        peak: interpolated_peak(spec, &mags, k),
        tie,
    })
}

/// Local maxima (excluding DC) with magnitude at least `rel` of the largest,
/// strongest first.
pub fn spectral_peaks(spec: &FoldedSpectrum, rel: f64) -> Vec<Peak> {
    let mags = spec.magnitudes();
    let max = mags.iter().skip(1).copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    let mut peaks: Vec<Peak> = (1..mags.len())
        .filter(|&k| {
            let left = mags[k - 1];
            let right = mags.get(k + 1).copied().unwrap_or(0.0);
            mags[k] >= left && mags[k] > right && mags[k] >= rel * max
        })
        .map(|k| interpolated_peak(spec, &mags, k))
        .collect();
    peaks.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    peaks
}

/// Magnitude of the centred record's DTFT at `f` (Hz), on the same scale as
/// interior bins of [`fringe_spectrum`].
pub fn tone_amplitude(record: &FringeRecord, f: f64) -> f64 {
    let x = record.centred();
    let t0 = record.hold_times.first().copied().unwrap_or(0.0);
    let w = 2.0 * std::f64::consts::PI * f;
    let acc: C64 = x
        .iter()
        .zip(&record.hold_times)
        .map(|(v, t)| C64::from_polar(*v, -w * (t - t0)))
        .sum();
    2f64.sqrt() * acc.norm() / x.len() as f64
}

/// Standard error of [`tone_amplitude`] from the per-point standard errors,
/// `√(Σ se²)/M` (the noise component in phase with the tone); zero for an
/// exact record.
pub fn tone_amplitude_stderr(record: &FringeRecord) -> f64 {
    match &record.stderr {
        Some(se) if !se.is_empty() => se.iter().map(|s| s * s).sum::<f64>().sqrt() / se.len() as f64,
        _ => 0.0,
    }
}

/// Frequency maximizing the DTFT magnitude within `guess ± half_width`,
/// by golden-section search. Resolves shifts well below one FFT bin.
pub fn refine_frequency(record: &FringeRecord, guess: f64, half_width: f64) -> Result<f64> {
    record.uniform_step()?;
    if !(half_width > 0.0) {
        return domain("search half-width must be positive");
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (guess - half_width, guess + half_width);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (tone_amplitude(record, c), tone_amplitude(record, d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-9 * guess.abs().max(1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = tone_amplitude(record, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = tone_amplitude(record, d);
        }
    }
    Ok(0.5 * (a + b))
}

/// Parameters of `value = A·(1 − ε)^{k·N}` fitted in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub amplitude: f64,
    pub error_rate: f64,
    pub amplitude_se: f64,
    pub error_rate_se: f64,
    /// 95 % t-interval for the error rate.
    pub error_rate_ci95: (f64, f64),
    /// Root of the residual sum of squares in log space.
    pub residual_norm: f64,
    pub dof: usize,
}

/// Linear least squares of `ln value` against `N`.
pub fn fit_power_decay(points: &[(f64, f64)], exponent_per_n: u32) -> Result<FitResult> {
    if points.len() < 3 {
        return domain(format!("need at least 3 points, got {}", points.len()));
    }
    if exponent_per_n == 0 {
        return domain("exponent per N must be positive");
    }
    if let Some(&(n, v)) = points.iter().find(|(_, v)| !(*v > 0.0)) {
        return domain(format!(
            "value {v} at N = {n} is not positive; drop points below the amplitude floor before fitting"
        ));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return domain("all points share the same N");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = points.len() - 2;
    let s2 = rss / dof as f64;
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / m + xm * xm / sxx)).sqrt();

    let k = exponent_per_n as f64;
    let amplitude = intercept.exp();
    let retained = (slope / k).exp();
    let error_rate = 1.0 - retained;
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(Error::Numeric(format!(
            "fitted error rate {error_rate:.4} lies outside [0, 1]; the data do not decay"
        )));
    }
    let t = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .inverse_cdf(0.975);
    let lo = 1.0 - ((slope + t * se_slope) / k).exp();
    let hi = 1.0 - ((slope - t * se_slope) / k).exp();
    Ok(FitResult {
        amplitude,
        error_rate,
        amplitude_se: amplitude * se_intercept,
        error_rate_se: retained / k * se_slope,
        error_rate_ci95: (lo, hi),
        residual_norm: rss.sqrt(),
        dof,
    })
}

/// Keep `(N, value)` pairs whose value is at least three standard errors.
pub fn apply_amplitude_floor(points: &[(f64, f64, f64)]) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|(_, v, se)| *v > 0.0 && *v >= 3.0 * se)
        .map(|&(n, v, _)| (n, v))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityComparison {
    pub pass: bool,
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
}

/// Site-by-site comparison in the max norm.
pub fn compare_density(profile: &[f64], reference: &[f64], tolerance: f64) -> Result<DensityComparison> {
    if profile.len() != reference.len() {
        return domain(format!(
            "profile has {} sites, reference {}",
            profile.len(),
            reference.len()
        ));
    }
    let residuals: Vec<f64> = profile.iter().zip(reference).map(|(a, b)| a - b).collect();
    let max_abs_residual = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    Ok(DensityComparison {
        pass: max_abs_residual <= tolerance,
        residuals,
        max_abs_residual,
    })
}
