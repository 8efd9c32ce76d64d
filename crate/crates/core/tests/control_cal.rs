use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use bhqt::control_cal::{
    build_crosstalk, flux_for_frequency, invert_crosstalk, predistort_controls, CrosstalkMatrix, DispersionModel,
    SinglePoleKernel, DEFAULT_CONDITION_CAP,
};
use bhqt::schedule::SampledControls;
use bhqt::Error;
use nalgebra::DMatrix;

fn ghz(f: f64) -> f64 {
    2.0 * PI * f * 1e9
}

#[test]
fn diagonal_slopes_give_identity() {
    let s = [1.5, 2.0, 0.7];
    let m = build_crosstalk(&DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&s)), &s).unwrap();
    assert_eq!(m.matrix(), &DMatrix::identity(3, 3));
}

#[test]
fn slope_ratio() {
    let slopes = DMatrix::from_row_slice(2, 2, &[2.0, 0.2, 0.0, 1.0]);
    let m = build_crosstalk(&slopes, &[2.0, 1.0]).unwrap();
    assert_abs_diff_eq!(m.matrix()[(0, 0)], 1.0);
    assert_abs_diff_eq!(m.matrix()[(0, 1)], 0.1);
    assert!(matches!(build_crosstalk(&slopes, &[2.0, 0.0]), Err(Error::Domain(_))));
}

#[test]
fn inversion_examples() {
    let id = CrosstalkMatrix::new(DMatrix::identity(2, 2)).unwrap();
    assert_eq!(invert_crosstalk(&id, &[1.0, 0.0], DEFAULT_CONDITION_CAP).unwrap(), vec![1.0, 0.0]);
    let m = CrosstalkMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0])).unwrap();
    let i = invert_crosstalk(&m, &[1.0, 0.0], DEFAULT_CONDITION_CAP).unwrap();
    assert_abs_diff_eq!(i[0], 1.0 / 0.99, epsilon = 1e-12);
    assert_abs_diff_eq!(i[1], -0.1 / 0.99, epsilon = 1e-12);
    let back = m.apply(&i);
    assert_abs_diff_eq!(back[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(back[1], 0.0, epsilon = 1e-12);
}

#[test]
fn ill_conditioned_matrix_is_numeric_error() {
    let m = CrosstalkMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
    assert!(matches!(invert_crosstalk(&m, &[1.0, 0.0], 1e6), Err(Error::Numeric(_))));
    assert!(CrosstalkMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0])).is_err());
}

#[test]
fn text_round_trip_and_row_normalization() {
    let m = CrosstalkMatrix::new(DMatrix::from_row_slice(3, 3, &[2.0, 0.1, -0.04, 0.03, 0.5, 0.02, 0.0, 0.01, 1.0])).unwrap();
    assert_eq!(CrosstalkMatrix::from_text(&m.to_text()).unwrap(), m);
    let parsed = CrosstalkMatrix::from_text("# header\n1, 0.1\n\n0.2 1\n").unwrap();
    assert_eq!(parsed.matrix()[(1, 0)], 0.2);
    let r = m.row_normalized();
    assert_abs_diff_eq!(r[(0, 1)], 0.05);
    assert!((0..3).all(|i| r[(i, i)] == 1.0));
    assert!(CrosstalkMatrix::from_text("1 2\n3\n").is_err());
}

#[test]
fn synthetic_ground_truth_round_trip() {
    let n = 7;
    let truth = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + 0.05 * i as f64 } else { 0.01 * ((i * 3 + j) % 5) as f64 - 0.02 });
    let sens: Vec<f64> = (0..n).map(|i| 1.2 + 0.1 * i as f64).collect();
    let slopes = DMatrix::from_fn(n, n, |i, j| truth[(i, j)] * sens[i]);
    let m = build_crosstalk(&slopes, &sens).unwrap();
    let currents: Vec<f64> = (0..n).map(|i| 0.3 - 0.07 * i as f64).collect();
    let flux = m.apply(&currents);
    let back = invert_crosstalk(&m, &flux, DEFAULT_CONDITION_CAP).unwrap();
    for (a, b) in currents.iter().zip(&back) {
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-3));
    }
}

#[test]
fn dispersion_inverse() {
    let model = DispersionModel::new(ghz(6.0), ghz(0.25));
    assert!(flux_for_frequency(&model, ghz(6.0)).unwrap().abs() < 1e-4);
    let phi = flux_for_frequency(&model, ghz(5.31)).unwrap();
    assert!(phi > 0.0 && phi < 0.5);
    assert!((model.frequency(phi) - ghz(5.31)).abs() < 2.0 * PI * 1e3);
    let (lo, _) = model.tuning_range();
    assert!(flux_for_frequency(&model, lo - ghz(0.1)).is_err());
    assert!(flux_for_frequency(&model, ghz(6.2)).is_err());
    assert!(model.slope(0.2) < 0.0);
    assert_abs_diff_eq!(model.frequency(1.0), model.frequency(0.0), epsilon = 1e-3);
}

#[test]
fn crosstalk_correction_reaches_sub_100_khz() {
    // Seven sites with 2 % nearest-neighbour crosstalk. Naive biasing ignores
    // the off-diagonal terms; corrected biasing inverts the full matrix.
    let n = 7;
    let truth = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => 0.02,
        _ => 0.0,
    });
    let m = CrosstalkMatrix::new(truth).unwrap();
    let models: Vec<DispersionModel> = (0..n).map(|i| DispersionModel::new(ghz(6.0 - 0.05 * i as f64), ghz(0.25))).collect();
    let targets: Vec<f64> = (0..n).map(|i| ghz(5.31 + if i % 2 == 0 { 0.1 } else { -0.1 })).collect();
    let flux: Vec<f64> = models.iter().zip(&targets).map(|(md, &w)| flux_for_frequency(md, w).unwrap()).collect();
    let error = |currents: &[f64]| -> f64 {
        let actual = m.apply(currents);
        models
            .iter()
            .zip(&actual)
            .zip(&targets)
            .map(|((md, &phi), &w)| (md.frequency(phi) - w).abs())
            .fold(0.0, f64::max)
    };
    let naive = error(&flux);
    let corrected = error(&invert_crosstalk(&m, &flux, DEFAULT_CONDITION_CAP).unwrap());
    assert!(naive > 2.0 * PI * 1e6, "naive error {naive}");
    assert!(corrected < 2.0 * PI * 1e5, "corrected error {corrected}");
}

#[test]
fn kernel_predistortion_inverts_the_line() {
    let k = SinglePoleKernel::new(0.8).unwrap();
    let target: Vec<f64> = (0..50).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
    let x = k.predistort(&target, 0.0);
    for (a, b) in k.respond(&x, 0.0).iter().zip(&target) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    assert!(SinglePoleKernel::new(1.0).is_err());

    let mut c = SampledControls::new(1e-9, 2);
    for v in &target {
        c.push_sample(&[*v, 3.0]);
    }
    let out = predistort_controls(&c, &[Some(k), None]).unwrap();
    assert_eq!(out.sample(20)[1], 3.0);
    assert_abs_diff_eq!(out.sample(10)[0], 1.0 / 0.2, epsilon = 1e-12);
    assert!(predistort_controls(&c, &[None]).is_err());
}
