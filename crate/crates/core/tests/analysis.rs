use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use bhqt::analysis::{
    apply_amplitude_floor, compare_density, dominant_frequency, fit_power_decay, fold_frequency, fringe_spectrum,
    refine_frequency, spectral_peaks, tone_amplitude, FringeRecord,
};
use bhqt::Error;
use proptest::prelude::*;

fn record(n: usize, dt: f64, tones: &[(f64, f64)]) -> FringeRecord {
    let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let p = t
        .iter()
        .map(|&t| 0.5 + tones.iter().map(|(a, f)| a * (2.0 * PI * f * t).cos()).sum::<f64>())
        .collect();
    FringeRecord::new(t, p)
}

#[test]
fn resolves_a_50_mhz_fringe() {
    let spec = fringe_spectrum(&record(200, 1e-9, &[(0.5, 50e6)])).unwrap();
    let d = dominant_frequency(&spec).unwrap();
    assert!((d.peak.frequency - 50e6).abs() <= spec.resolution());
    assert_eq!(d.peak.bin, 10);
    assert!(d.tie.is_none());
}

#[test]
fn folds_above_nyquist() {
    assert_abs_diff_eq!(fold_frequency(750e6, 1e-9), 250e6, epsilon = 1e-3);
    assert_abs_diff_eq!(fold_frequency(-120e6, 1e-9), 120e6, epsilon = 1e-3);
    assert_abs_diff_eq!(fold_frequency(1250e6, 1e-9), 250e6, epsilon = 1e-3);
    let spec = fringe_spectrum(&record(400, 1e-9, &[(0.4, 750e6)])).unwrap();
    let d = dominant_frequency(&spec).unwrap();
    assert!((d.peak.frequency - 250e6).abs() <= spec.resolution());
}

#[test]
fn constant_record_has_no_peaks() {
    let r = FringeRecord::new((0..64).map(|k| k as f64 * 1e-9).collect(), vec![0.3; 64]);
    let spec = fringe_spectrum(&r).unwrap();
    assert!(spec.magnitudes().iter().all(|m| *m < 1e-15));
    assert!(spectral_peaks(&spec, 0.2).is_empty());
}

#[test]
fn non_uniform_record_is_rejected() {
    let r = FringeRecord::new(vec![0.0, 1e-9, 2.5e-9, 3e-9], vec![0.1, 0.2, 0.3, 0.4]);
    assert!(r.uniform_step().is_err());
    assert!(fringe_spectrum(&r).is_err());
}

#[test]
fn equal_tones_report_a_tie() {
    let spec = fringe_spectrum(&record(200, 1e-9, &[(0.2, 100e6), (0.2, 300e6)])).unwrap();
    let d = dominant_frequency(&spec).unwrap();
    let tie = d.tie.expect("tie");
    let mut fs = [d.peak.frequency, tie.frequency];
    fs.sort_by(f64::total_cmp);
    assert!((fs[0] - 100e6).abs() < 1e6 && (fs[1] - 300e6).abs() < 1e6);
    assert_eq!(spectral_peaks(&spec, 0.5).len(), 2);
}

#[test]
fn refinement_beats_the_bin_width() {
    let r = record(200, 1e-9, &[(0.5, 52.3e6)]);
    let spec = fringe_spectrum(&r).unwrap();
    let coarse = dominant_frequency(&spec).unwrap().peak.frequency;
    let fine = refine_frequency(&r, coarse, spec.resolution()).unwrap();
    assert!((fine - 52.3e6).abs() < 0.1e6, "{fine}");
    assert!(tone_amplitude(&r, fine) > tone_amplitude(&r, coarse + 0.5 * spec.resolution()));
    assert!(refine_frequency(&r, coarse, 0.0).is_err());
}

#[test]
fn exact_decay_fits() {
    for (a, eps, k) in [(1.0, 0.1, 4u32), (0.8, 0.054, 2)] {
        let pts: Vec<(f64, f64)> = (1..=6).map(|n| (n as f64, a * (1.0f64 - eps).powi((k * n) as i32))).collect();
        let fit = fit_power_decay(&pts, k).unwrap();
        assert_abs_diff_eq!(fit.amplitude, a, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.error_rate, eps, epsilon = 1e-12);
        assert!(fit.residual_norm < 1e-12);
        assert_eq!(fit.dof, 4);
    }
}

#[test]
fn decay_fit_rejects_bad_input() {
    assert!(matches!(
        fit_power_decay(&[(1.0, 0.5), (2.0, 0.0), (3.0, 0.1)], 2),
        Err(Error::Domain(_))
    ));
    assert!(fit_power_decay(&[(1.0, 0.5), (2.0, 0.4)], 2).is_err());
    assert!(fit_power_decay(&[(1.0, 0.5), (1.0, 0.4), (1.0, 0.3)], 2).is_err());
}

#[test]
fn amplitude_floor_drops_weak_points() {
    let kept = apply_amplitude_floor(&[(1.0, 0.5, 0.01), (2.0, 0.02, 0.01), (3.0, -0.01, 0.01), (4.0, 0.03, 0.01)]);
    assert_eq!(kept, vec![(1.0, 0.5), (4.0, 0.03)]);
}

#[test]
fn density_comparison() {
    let c = compare_density(&[1.0, 0.98, 1.03, 0.0], &[1.0, 1.0, 1.0, 0.0], 0.05).unwrap();
    assert!(c.pass);
    assert_abs_diff_eq!(c.max_abs_residual, 0.03, epsilon = 1e-12);
    assert_abs_diff_eq!(c.residuals[1], -0.02, epsilon = 1e-12);
    assert!(!compare_density(&[1.0, 0.9], &[1.0, 1.0], 0.05).unwrap().pass);
    assert!(compare_density(&[1.0], &[1.0, 1.0], 0.05).is_err());
}

proptest! {
    #[test]
    fn parseval(p in prop::collection::vec(0.0f64..1.0, 8..200)) {
        let n = p.len();
        let r = FringeRecord::new((0..n).map(|k| k as f64 * 1e-9).collect(), p.clone());
        let spec = fringe_spectrum(&r).unwrap();
        let mean = p.iter().sum::<f64>() / n as f64;
        let power: f64 = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let folded: f64 = spec.magnitudes().iter().map(|m| m * m).sum();
        prop_assert!((power - folded).abs() <= 1e-12 * power.max(1e-12));
    }

    #[test]
    fn dominant_frequency_is_scale_invariant(f in 20e6f64..450e6, scale in 0.01f64..1.0, offset in -0.5f64..0.5) {
        let base = record(256, 1e-9, &[(0.4, f)]);
        let moved = FringeRecord::new(base.hold_times.clone(), base.p1.iter().map(|x| scale * x + offset).collect());
        let a = dominant_frequency(&fringe_spectrum(&base).unwrap()).unwrap().peak;
        let b = dominant_frequency(&fringe_spectrum(&moved).unwrap()).unwrap().peak;
        prop_assert_eq!(a.bin, b.bin);
        prop_assert!((a.frequency - b.frequency).abs() < 1e-6 * f);
    }

    #[test]
    fn decay_fit_recovers_parameters(a in 0.05f64..1.0, eps in 0.001f64..0.5, k in 1u32..5) {
        let pts: Vec<(f64, f64)> = (1..=7).map(|n| (n as f64, a * (1.0 - eps).powi((k * n) as i32))).collect();
        let fit = fit_power_decay(&pts, k).unwrap();
        prop_assert!((fit.error_rate - eps).abs() < 1e-8);
        prop_assert!((fit.amplitude - a).abs() < 1e-8 * a.max(1.0));
    }
}
