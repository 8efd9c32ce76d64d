use bhqt::protocols::{preset_text, ExperimentConfig, PRESET_NAMES};
use bhqt::Error;

fn set(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn messages(e: Error) -> Vec<String> {
    match e {
        Error::Config(m) => m,
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn presets_validate() {
    for name in PRESET_NAMES {
        let cfg = ExperimentConfig::preset(name).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again.to_toml(), cfg.to_toml());
    }
    assert_eq!(ExperimentConfig::preset("5q").unwrap().n_sites(), 5);
    assert_eq!(ExperimentConfig::preset("7q").unwrap().n_sites(), 7);
    assert!(preset_text("nine_qubit").is_err());
}

#[test]
fn overrides_apply_before_validation() {
    let text = preset_text("five_qubit").unwrap();
    let cfg = ExperimentConfig::from_toml_with(text, &set(&[("ramp.t_ramp_ns", "480"), ("hold_points", "64")])).unwrap();
    assert_eq!(cfg.ramp.t_ramp_ns, 480.0);
    assert_eq!(cfg.ramsey.hold_points, 64);
    assert_eq!(cfg.ramsey.hold_times_ns().len(), 64);
}

#[test]
fn every_violation_is_reported() {
    let text = preset_text("five_qubit").unwrap();
    let errs = messages(
        ExperimentConfig::from_toml_with(text, &set(&[("ramp.tau_fraction", "0.9"), ("lattice.ancilla_site", "9")]))
            .unwrap_err(),
    );
    assert!(errs.len() >= 2, "{errs:?}");
    assert!(errs.iter().any(|m| m.contains("tau_fraction")), "{errs:?}");
    assert!(errs.iter().any(|m| m.contains("ancilla_site")), "{errs:?}");
}

#[test]
fn unknown_and_ambiguous_keys() {
    let text = preset_text("seven_qubit").unwrap();
    let unknown = messages(ExperimentConfig::from_toml_with(text, &set(&[("warp_factor", "9")])).unwrap_err());
    assert!(unknown[0].contains("warp_factor"));
    let ambiguous = messages(ExperimentConfig::from_toml_with(text, &set(&[("t_ramp_ns", "100")])).unwrap_err());
    assert!(ambiguous[0].contains("ramp.t_ramp_ns") && ambiguous[0].contains("sweep.t_ramp_ns"), "{ambiguous:?}");
}

#[test]
fn malformed_documents() {
    assert!(matches!(ExperimentConfig::from_toml("[lattice"), Err(Error::Config(_))));
    assert!(ExperimentConfig::from_toml("").is_err());
}
