use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use bhqt::fock::{CompositeState, FockState, LatticeSpec, SectorRegistry, C64};
use bhqt::noise::{
    correct_populations, evolve_trajectory, reported_probability, sample_quasistatic, trajectory_rng, NoiseModel,
    ReadoutModel,
};
use bhqt::propagator::{evolve_sampled, StepPolicy};
use bhqt::schedule::{ControlEvent, SampledControls};
use bhqt::units::{mhz, ns};
use bhqt::Error;
use nalgebra::DMatrix;

/// Two uncoupled two-level sites.
fn qubits() -> SectorRegistry {
    SectorRegistry::new(LatticeSpec::new(vec![0.0], vec![0.0, 0.0], 1).unwrap()).unwrap()
}

/// `⟨0|ρ|1⟩` of site 0 with site 1 empty.
fn coherence(psi: &CompositeState, reg: &SectorRegistry) -> C64 {
    let c0 = psi.sector(0).map_or(C64::new(0.0, 0.0), |v| v[0]);
    let k = reg.basis(1).index_of(&FockState::new(vec![1, 0])).unwrap();
    let c1 = psi.sector(1).map_or(C64::new(0.0, 0.0), |v| v[k]);
    c0 * c1.conj()
}

fn excited_population(psi: &CompositeState, reg: &SectorRegistry) -> f64 {
    let k = reg.basis(1).index_of(&FockState::new(vec![1, 0])).unwrap();
    psi.sector(1).map_or(0.0, |v| v[k].norm_sqr())
}

fn hold(dt: f64, n: usize) -> SampledControls {
    let mut c = SampledControls::new(dt, 2);
    c.push_constant(&[0.0, 0.0], n);
    c
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn zero_sigma_gives_zero_offsets() {
    let model = NoiseModel::noiseless(3, 1);
    assert_eq!(sample_quasistatic(&model, &mut trajectory_rng(1, 0)), vec![0.0; 3]);
}

#[test]
fn quasistatic_statistics() {
    let s = mhz(0.5);
    let model = NoiseModel { sigma: vec![s, 2.0 * s], ..NoiseModel::noiseless(2, 3) };
    let draws: Vec<Vec<f64>> = (0..100_000).map(|k| sample_quasistatic(&model, &mut trajectory_rng(3, k))).collect();
    for (site, scale) in [(0, s), (1, 2.0 * s)] {
        let xs: Vec<f64> = draws.iter().map(|d| d[site] / scale).collect();
        let (m, _) = mean_and_se(&xs);
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(m.abs() < 0.015, "mean {m}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let model = NoiseModel { sigma: vec![1.0, 1.0], ..NoiseModel::noiseless(2, 0) };
    let a = sample_quasistatic(&model, &mut trajectory_rng(9, 4));
    assert_eq!(a, sample_quasistatic(&model, &mut trajectory_rng(9, 4)));
    assert_ne!(a, sample_quasistatic(&model, &mut trajectory_rng(9, 5)));
}

#[test]
fn invalid_coherence_times_are_rejected() {
    let mut m = NoiseModel::noiseless(2, 0);
    m.t1 = vec![1e-6, 1e-6];
    m.t2 = vec![3e-6, 1e-6];
    assert!(matches!(m.validate(2), Err(Error::Config(_))));
    assert!(NoiseModel::noiseless(2, 0).validate(3).is_err());
    assert!(!NoiseModel::noiseless(2, 0).is_dissipative());
}

#[test]
fn noiseless_trajectory_is_deterministic_evolution() {
    let lat = LatticeSpec::uniform(4, mhz(-9.0), mhz(-240.0), 2).unwrap();
    let reg = SectorRegistry::new(lat).unwrap();
    let psi = CompositeState::from_occupations(&reg, &[1, 1, 0, 0]).unwrap();
    let mut c = SampledControls::new(ns(0.5), 4);
    for k in 0..400 {
        let x = mhz(20.0) * (k as f64 / 50.0).sin();
        c.push_sample(&[x, -x, 0.5 * x, 0.0]);
    }
    let policy = StepPolicy::default();
    let a = evolve_sampled(&psi, &c, &reg, &policy).unwrap();
    let b = evolve_trajectory(&psi, &c, &reg, &NoiseModel::noiseless(4, 5), &mut trajectory_rng(5, 0), &policy).unwrap();
    assert!(bhqt::fock::fidelity(&a, &b) > 1.0 - 1e-12);
}

#[test]
fn energy_relaxation_matches_t1() {
    let reg = qubits();
    let t1 = 2e-6;
    let model = NoiseModel { t1: vec![t1; 2], t2: vec![2.0 * t1; 2], ..NoiseModel::noiseless(2, 11) };
    let psi = CompositeState::from_occupations(&reg, &[1, 0]).unwrap();
    let (dt, steps) = (ns(5.0), 300);
    let c = hold(dt, steps);
    let policy = StepPolicy { max_step: ns(5.0), ..StepPolicy::default() };
    let p: Vec<f64> = (0..2000)
        .map(|k| {
            let out = evolve_trajectory(&psi, &c, &reg, &model, &mut trajectory_rng(11, k), &policy).unwrap();
            excited_population(&out, &reg)
        })
        .collect();
    let (m, se) = mean_and_se(&p);
    let expect = (-(steps as f64) * dt / t1).exp();
    assert!((m - expect).abs() <= 3.0 * se, "{m} ± {se} vs {expect}");
}

#[test]
fn ramsey_contrast_matches_t2() {
    let reg = qubits();
    let t2 = 1e-6;
    let model = NoiseModel { t1: vec![f64::INFINITY; 2], t2: vec![t2; 2], ..NoiseModel::noiseless(2, 12) };
    let mut c = SampledControls::new(ns(5.0), 2);
    c.push_event(ControlEvent::Rotation { site: 0, angle: 0.5 * PI, phase: 0.0 });
    c.push_constant(&[0.0, 0.0], 140);
    let t = 140.0 * ns(5.0);
    let policy = StepPolicy { max_step: ns(5.0), ..StepPolicy::default() };
    let vac = CompositeState::vacuum(&reg);
    let rho: Vec<C64> = (0..2000)
        .map(|k| {
            let out = evolve_trajectory(&vac, &c, &reg, &model, &mut trajectory_rng(12, k), &policy).unwrap();
            coherence(&out, &reg)
        })
        .collect();
    // Quadrature contrast: both components of the mean coherence.
    let re: Vec<f64> = rho.iter().map(|z| 2.0 * z.re).collect();
    let im: Vec<f64> = rho.iter().map(|z| 2.0 * z.im).collect();
    let ((mr, sr), (mi, si)) = (mean_and_se(&re), mean_and_se(&im));
    let contrast = mr.hypot(mi);
    let se = sr.hypot(si);
    let expect = (-t / t2).exp();
    assert!((contrast - expect).abs() <= 3.0 * se, "{contrast} ± {se} vs {expect}");
}

#[test]
fn static_noise_dephases_free_evolution_and_echo_refocuses() {
    let reg = qubits();
    let sigma = mhz(1.0);
    let model = NoiseModel { sigma: vec![sigma, 0.0], ..NoiseModel::noiseless(2, 13) };
    let (dt, half) = (ns(1.0), 100);
    let t = 2.0 * half as f64 * dt;
    let vac = CompositeState::vacuum(&reg);
    let policy = StepPolicy::default();
    let mut free = SampledControls::new(dt, 2);
    free.push_event(ControlEvent::Rotation { site: 0, angle: 0.5 * PI, phase: 0.0 });
    free.push_constant(&[0.0, 0.0], 2 * half);
    let mut echo = SampledControls::new(dt, 2);
    echo.push_event(ControlEvent::Rotation { site: 0, angle: 0.5 * PI, phase: 0.0 });
    echo.push_constant(&[0.0, 0.0], half);
    echo.push_event(ControlEvent::Rotation { site: 0, angle: PI, phase: 0.0 });
    echo.push_constant(&[0.0, 0.0], half);

    let run = |c: &SampledControls| -> Vec<C64> {
        (0..2000)
            .map(|k| coherence(&evolve_trajectory(&vac, c, &reg, &model, &mut trajectory_rng(13, k), &policy).unwrap(), &reg))
            .collect()
    };
    let rho = run(&free);
    let re: Vec<f64> = rho.iter().map(|z| 2.0 * z.re).collect();
    let im: Vec<f64> = rho.iter().map(|z| 2.0 * z.im).collect();
    let ((mr, sr), (mi, si)) = (mean_and_se(&re), mean_and_se(&im));
    let expect = (-0.5 * (sigma * t).powi(2)).exp();
    assert!((mr.hypot(mi) - expect).abs() <= 3.0 * sr.hypot(si), "{} vs {expect}", mr.hypot(mi));

    let refocused: C64 = run(&echo).iter().sum::<C64>() / 2000.0;
    assert_abs_diff_eq!(2.0 * refocused.norm(), 1.0, epsilon = 1e-9);
}

#[test]
fn symmetric_readout_reports_fidelity() {
    let reg = qubits();
    let readout = ReadoutModel::symmetric(&[0.9, 0.95], 2).unwrap();
    let psi = CompositeState::from_occupations(&reg, &[1, 0]).unwrap();
    assert_abs_diff_eq!(reported_probability(&psi, &reg, &readout, &[(0, 1)]).unwrap(), 0.9, epsilon = 1e-15);
    assert_abs_diff_eq!(reported_probability(&psi, &reg, &readout, &[(1, 1)]).unwrap(), 0.05, epsilon = 1e-15);
    assert_abs_diff_eq!(reported_probability(&psi, &reg, &readout, &[(0, 1), (1, 0)]).unwrap(), 0.9 * 0.95, epsilon = 1e-15);
}

#[test]
fn confusion_correction() {
    let readout = ReadoutModel::symmetric(&[0.9], 2).unwrap();
    let c = correct_populations(&[vec![0.82, 0.18]], &readout).unwrap();
    assert_abs_diff_eq!(c.populations[0][0], 0.9, epsilon = 1e-12);
    assert_abs_diff_eq!(c.populations[0][1], 0.1, epsilon = 1e-12);
    assert!(!c.out_of_range);

    let confusion = DMatrix::from_row_slice(3, 3, &[0.92, 0.06, 0.02, 0.08, 0.85, 0.07, 0.01, 0.1, 0.89]);
    let readout = ReadoutModel::new(vec![confusion.clone()]).unwrap();
    let p = nalgebra::DVector::from_column_slice(&[0.2, 0.5, 0.3]);
    let raw = confusion.transpose() * &p;
    let back = correct_populations(&[raw.iter().copied().collect()], &readout).unwrap();
    for (a, b) in back.populations[0].iter().zip(p.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    let singular = ReadoutModel::new(vec![DMatrix::from_element(2, 2, 0.5)]).unwrap();
    assert!(matches!(correct_populations(&[vec![0.5, 0.5]], &singular), Err(Error::Numeric(_))));
}
