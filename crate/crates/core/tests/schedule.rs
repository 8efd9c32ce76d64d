use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use bhqt::fock::{fidelity, CompositeState, FockState, LatticeSpec, SectorRegistry, C64};
use bhqt::propagator::{evolve_sampled, StepPolicy};
use bhqt::schedule::{
    apply_rotation, apply_virtual_phase, compile, exp_ramp_eval, RampProfile, Schedule, Segment,
};
use bhqt::units::{mhz, ns};
use bhqt::Error;
use proptest::prelude::*;

fn pair() -> SectorRegistry {
    SectorRegistry::new(LatticeSpec::new(vec![0.0], vec![mhz(-240.0); 2], 2).unwrap()).unwrap()
}

fn amp(psi: &CompositeState, reg: &SectorRegistry, occ: &[u8]) -> C64 {
    let n = occ.iter().map(|&x| x as usize).sum();
    let k = reg.basis(n).index_of(&FockState::new(occ.to_vec())).unwrap();
    psi.sector(n).map_or(C64::new(0.0, 0.0), |v| v[k])
}

#[test]
fn ramp_end_points_and_midpoint() {
    let (a, b, t) = (mhz(-205.0), mhz(234.0), ns(240.0));
    assert_eq!(exp_ramp_eval(0.0, t, 0.5 * t, a, b).unwrap(), a);
    assert_abs_diff_eq!(exp_ramp_eval(t, t, 0.5 * t, a, b).unwrap(), b, epsilon = 1e-6);
    let frac = (1.0 - (-1f64).exp()) / (1.0 - (-2f64).exp());
    assert_abs_diff_eq!(frac, 0.7311, epsilon = 1e-4);
    let mid = exp_ramp_eval(0.5 * t, t, 0.5 * t, a, b).unwrap();
    assert_abs_diff_eq!(mid, a + (b - a) * frac, epsilon = 1e-6);
    assert!(matches!(exp_ramp_eval(0.1, 1.0, 0.0, a, b), Err(Error::Domain(_))));
    assert!(exp_ramp_eval(1.5, 1.0, 0.5, a, b).is_err());
}

#[test]
fn hold_compiles_to_identical_samples() {
    let d = vec![mhz(50.0), mhz(-100.0)];
    let s = Schedule::from_segments(2, vec![Segment::Hold { duration: ns(100.0), detunings: d.clone() }]).unwrap();
    let c = compile(&s, ns(1.0)).unwrap();
    assert_eq!(c.n_samples(), 100);
    assert!((0..100).all(|k| c.sample(k) == d.as_slice()));
}

#[test]
fn modulation_sample_on_the_flat_top() {
    let base = vec![0.0, mhz(234.0)];
    let (eps, w) = (mhz(10.0), mhz(29.0));
    let s = Schedule::from_segments(
        2,
        vec![Segment::SiteModulation {
            site: 0,
            amplitude: eps,
            frequency: w,
            duration: ns(100.0),
            edge_sigma: ns(5.0),
            base: base.clone(),
        }],
    )
    .unwrap();
    let c = compile(&s, ns(0.5)).unwrap();
    let k = 100;
    let t = (k as f64 + 0.5) * ns(0.5);
    assert_abs_diff_eq!(c.sample(k)[0], eps * (w * t).cos(), epsilon = 1e-6);
    assert_eq!(c.sample(k)[1], base[1]);
    // Envelope edges vanish smoothly towards the ends.
    assert!(c.sample(0)[0].abs() < 0.2 * eps);
}

#[test]
fn tau_window_is_enforced() {
    let mut s = Schedule::new(2);
    let bad = Segment::ramp(ns(100.0), &[0.0, 0.0], &[1.0, 1.0], 0.3, RampProfile::Approach);
    assert!(s.push(bad.clone()).is_err());
    if let Segment::ExpRamp { duration, start, end, tau, profile, .. } = bad {
        let ok = Segment::ExpRamp { duration, start, end, tau, profile, tau_override: true };
        assert!(s.push(ok).is_ok());
    }
    assert!(s
        .push(Segment::InstantRotation { site: 2, angle: PI, phase: 0.0 })
        .is_err());
}

#[test]
fn rotation_conventions() {
    let reg = pair();
    let vac = CompositeState::vacuum(&reg);
    let pi = apply_rotation(&vac, &reg, 0, PI, 0.0, 1e-6).unwrap();
    assert!((amp(&pi, &reg, &[1, 0]) - C64::new(0.0, -1.0)).norm() < 1e-15);
    assert!(amp(&pi, &reg, &[0, 0]).norm() < 1e-15);
    let half = apply_rotation(&vac, &reg, 0, 0.5 * PI, 0.0, 1e-6).unwrap();
    let s = 0.5f64.sqrt();
    assert!((amp(&half, &reg, &[0, 0]) - C64::new(s, 0.0)).norm() < 1e-15);
    assert!((amp(&half, &reg, &[1, 0]) - C64::new(0.0, -s)).norm() < 1e-15);
}

#[test]
fn rotation_refuses_doublon_weight() {
    let reg = pair();
    let psi = CompositeState::from_occupations(&reg, &[2, 0]).unwrap();
    assert!(matches!(apply_rotation(&psi, &reg, 0, PI, 0.0, 1e-6), Err(Error::ModelValidity(_))));
}

#[test]
fn virtual_phase() {
    let reg = pair();
    let psi = apply_rotation(&CompositeState::vacuum(&reg), &reg, 1, 0.5 * PI, 0.0, 1e-6).unwrap();
    assert_eq!(apply_virtual_phase(&psi, &reg, 1, 0.0), psi);
    let flipped = apply_virtual_phase(&psi, &reg, 1, PI);
    assert!((amp(&flipped, &reg, &[0, 1]) + amp(&psi, &reg, &[0, 1])).norm() < 1e-15);
    assert_eq!(amp(&flipped, &reg, &[0, 0]), amp(&psi, &reg, &[0, 0]));
}

fn sample_schedule() -> Schedule {
    let large = [mhz(-265.0), mhz(262.0), mhz(-205.0), mhz(309.0), mhz(-308.0)];
    let small = [mhz(50.0), mhz(100.0), mhz(234.0), mhz(-100.0), mhz(-50.0)];
    let trans = [0.0, 0.0, mhz(234.0), 0.0, 0.0];
    Schedule::from_segments(
        5,
        vec![
            Segment::InstantRotation { site: 2, angle: 0.5 * PI, phase: 0.3 },
            Segment::Hold { duration: ns(1.0), detunings: small.to_vec() },
            Segment::ramp(ns(240.0), &small, &trans, 0.5, RampProfile::Approach),
            Segment::SiteModulation {
                site: 1,
                amplitude: mhz(10.0),
                frequency: mhz(29.0),
                duration: ns(40.0),
                edge_sigma: ns(5.0),
                base: trans.to_vec(),
            },
            Segment::VirtualPhase { site: 2, phase: 1.25 },
            Segment::ramp(ns(120.0), &trans, &large, 0.6, RampProfile::Depart),
            Segment::ReadoutMarker { label: "end".into() },
        ],
    )
    .unwrap()
}

#[test]
fn toml_round_trip() {
    let s = sample_schedule();
    let back = Schedule::from_toml(&s.to_toml()).unwrap();
    let (a, b) = (compile(&s, ns(0.5)).unwrap(), compile(&back, ns(0.5)).unwrap());
    assert_eq!(a.n_samples(), b.n_samples());
    assert_eq!(a.events().len(), b.events().len());
    for k in 0..a.n_samples() {
        for (x, y) in a.sample(k).iter().zip(b.sample(k)) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
    assert!(Schedule::from_toml("n_sites = 2\n[[segment]]\nkind = \"warp\"\n").is_err());
}

#[test]
fn compile_is_deterministic() {
    let s = sample_schedule();
    assert_eq!(compile(&s, ns(0.5)).unwrap(), compile(&s, ns(0.5)).unwrap());
    assert!(compile(&s, 0.0).is_err());
}

#[test]
fn mirror_is_an_involution_and_reverses_time() {
    let s = sample_schedule();
    assert_eq!(s.mirrored().mirrored(), s);
    assert_abs_diff_eq!(s.mirrored().duration(), s.duration());

    // Ramp into the transistor point and back: a slow ramp returns to the
    // loaded state up to its small diabatic error.
    let small = [mhz(50.0), mhz(100.0), mhz(234.0), mhz(-100.0), mhz(-50.0)];
    let trans = [0.0, 0.0, mhz(234.0), 0.0, 0.0];
    let lat = LatticeSpec::new(
        vec![mhz(-9.032), mhz(-8.842), mhz(-8.936), mhz(-9.023)],
        vec![mhz(-240.0), mhz(-240.0), mhz(-231.0), mhz(-234.0), mhz(-239.0)],
        2,
    )
    .unwrap();
    let reg = SectorRegistry::new(lat).unwrap();
    let there = Schedule::from_segments(5, vec![Segment::ramp(ns(240.0), &small, &trans, 0.5, RampProfile::Approach)]).unwrap();
    let mut round = there.clone();
    round.extend(&there.mirrored()).unwrap();
    let psi = CompositeState::from_occupations(&reg, &[1, 1, 1, 0, 0]).unwrap();
    let out = evolve_sampled(&psi, &compile(&round, ns(0.5)).unwrap(), &reg, &StepPolicy::default()).unwrap();
    assert!(fidelity(&psi, &out) > 0.9, "{}", fidelity(&psi, &out));
}

proptest! {
    #[test]
    fn ramp_is_monotone(a in -300.0f64..300.0, b in -300.0f64..300.0, frac in 0.4f64..0.6, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let t = 1e-7;
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let x = exp_ramp_eval(lo * t, t, frac * t, a, b).unwrap();
        let y = exp_ramp_eval(hi * t, t, frac * t, a, b).unwrap();
        prop_assert!((y - x) * (b - a).signum() >= -1e-12);
    }

    #[test]
    fn rotation_is_unitary_and_invertible(theta in -6.3f64..6.3, phi in -3.2f64..3.2, re in -1.0f64..1.0, im in -1.0f64..1.0) {
        let reg = pair();
        let mut psi = apply_rotation(&CompositeState::vacuum(&reg), &reg, 0, 1.1, 0.4, 1e-6).unwrap();
        psi = apply_rotation(&psi, &reg, 1, 0.7, -0.2, 1e-6).unwrap();
        psi.scale(C64::new(re, im) / C64::new(re, im).norm().max(1e-3));
        psi.normalize();
        let r = apply_rotation(&psi, &reg, 0, theta, phi, 1e-6).unwrap();
        prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
        let back = apply_rotation(&r, &reg, 0, -theta, phi, 1e-6).unwrap();
        prop_assert!(fidelity(&back, &psi) > 1.0 - 1e-12);
    }
}
