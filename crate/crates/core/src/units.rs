//! Unit helpers. Everything inside the crate is SI: seconds and rad/s.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Cyclic frequency in MHz to angular frequency in rad/s.
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

/// Angular frequency in rad/s to cyclic MHz.
pub fn to_mhz(w: f64) -> f64 {
    w / (TWO_PI * 1e6)
}

pub fn ns(t: f64) -> f64 {
    t * 1e-9
}

pub fn to_ns(t: f64) -> f64 {
    t * 1e9
}

pub fn us(t: f64) -> f64 {
    t * 1e-6
}

pub fn mhz_vec(f: &[f64]) -> Vec<f64> {
    f.iter().copied().map(mhz).collect()
}
