use std::path::PathBuf;

use trihomog::limit1d::LimitKind;
use trihomog::profile::{OscillationProfile, ProfileFile};
use trihomog::sweep::{classify, predicted_regime, run_cell_k, run_converge, ConvergenceTable, EpsValue, MeshOverrides, SweepConfig};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("trihomog-sweep-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_profile(dir: &std::path::Path, p: &OscillationProfile<f64>) -> PathBuf {
    let path = dir.join("profile.json");
    std::fs::write(&path, serde_json::to_string(&ProfileFile::from_profile(p)).unwrap()).unwrap();
    path
}

fn coarse(profile: Option<PathBuf>, alpha: Vec<f64>, eps: &[u32]) -> SweepConfig {
    SweepConfig {
        profile,
        alpha,
        eps: eps.iter().map(|&n| EpsValue(n)).collect(),
        count: 2,
        modes: 2,
        mesh: MeshOverrides { elements_per_period: Some(4), layer_elements: Some(4), limit_elements: Some(16) },
        ..SweepConfig::default()
    }
}

fn assert_consistent(t: &ConvergenceTable) {
    for r in &t.rows {
        assert_eq!(r.d_int, (r.lambda_eps - r.lambda_int).abs());
        assert_eq!(r.d_hat, (r.lambda_eps - r.lambda_hat).abs());
        assert_eq!(r.d_dir, (r.lambda_eps - r.lambda_dir).abs());
        let min = r.d_int.min(r.d_hat).min(r.d_dir);
        let chosen = match r.classified.unwrap() {
            LimitKind::Intermediate => r.d_int,
            LimitKind::StrangeTerm => r.d_hat,
            LimitKind::DirichletOnW => r.d_dir,
        };
        assert_eq!(chosen, min);
    }
}

#[test]
fn flat_profile_classifies_intermediate_everywhere() {
    let dir = scratch("flat");
    let path = write_profile(&dir, &OscillationProfile::constant(1, 0.0).unwrap());
    let t = run_converge(&coarse(Some(path), vec![1.0, 1.5, 2.0], &[2, 4])).unwrap();
    assert_eq!(t.k, 0.0);
    assert_eq!(t.rows.len(), 3 * 2 * 2);
    for r in &t.rows {
        assert!(r.error.is_none());
        assert_eq!(r.predicted, LimitKind::Intermediate);
        assert_eq!(r.classified, Some(LimitKind::Intermediate), "{r:?}");
        assert!(r.d_int / r.lambda_int < 1e-3, "{r:?}");
    }
    assert_consistent(&t);
}

#[test]
fn identical_configs_give_identical_tables() {
    let cfg = coarse(None, vec![1.5, 2.0], &[2, 4]);
    let a = run_converge(&cfg).unwrap();
    let b = run_converge(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.sign_csv(), b.sign_csv());
    assert_consistent(&a);
    assert_eq!(a.sign_checks.len(), 1);
    let s = &a.sign_checks[0];
    assert_eq!((s.alpha, s.eps), (1.5, 0.25));
    assert_eq!(s.opposite_sign_preferred, s.d_hat_flipped < s.d_hat_literal);

    let out = scratch("write");
    a.write(&out).unwrap();
    let csv = std::fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(csv, a.to_csv());
    assert_eq!(csv.lines().count(), 1 + a.rows.len());
    assert!(out.join("table.json").exists());
    assert!(out.join("strange_sign.csv").exists());
    assert_eq!(std::fs::read_dir(out.join("cases")).unwrap().count(), 4);
}

#[test]
fn predicted_regimes_follow_alpha() {
    assert_eq!(predicted_regime(2.0, false), LimitKind::Intermediate);
    assert_eq!(predicted_regime(1.5, false), LimitKind::StrangeTerm);
    assert_eq!(predicted_regime(1.0, false), LimitKind::DirichletOnW);
    assert_eq!(predicted_regime(1.0, true), LimitKind::Intermediate);
    assert_eq!(classify(1.0, 1.0, 2.0), Some(LimitKind::Intermediate));
    assert_eq!(classify(3.0, 1.0, 1.0), Some(LimitKind::StrangeTerm));
    assert_eq!(classify(3.0, 2.0, 1.0), Some(LimitKind::DirichletOnW));
    assert_eq!(classify(f64::NAN, 2.0, 1.0), None);
}

#[test]
fn eps_values_parse_as_reciprocals() {
    assert_eq!(EpsValue::parse("1/8").unwrap(), EpsValue(8));
    assert_eq!(EpsValue::parse("0.125").unwrap(), EpsValue(8));
    assert!(EpsValue::parse("0.3").is_err());
    assert!(EpsValue::parse("1/0").is_err());
    let v: Vec<EpsValue> = serde_json::from_str(r#"[0.25, "1/16"]"#).unwrap();
    assert_eq!(v, vec![EpsValue(4), EpsValue(16)]);
    assert_eq!(serde_json::to_string(&EpsValue(32)).unwrap(), r#""1/32""#);
}

#[test]
fn config_rejects_bad_input() {
    let dir = scratch("cfg");
    let bad = [r#"{"alpha": [-1.0]}"#, r#"{"count": 0}"#, r#"{"eps": [0.3]}"#, r#"{"colour": 1}"#, r#"{"alpha": []}"#];
    for (i, text) in bad.iter().enumerate() {
        let path = dir.join(format!("bad{i}.json"));
        std::fs::write(&path, text).unwrap();
        assert!(SweepConfig::load(&path).is_err(), "{text}");
    }
    std::fs::write(dir.join("p.json"), r#"{"dim": 1, "b0": 1.0}"#).unwrap();
    let path = dir.join("ok.json");
    std::fs::write(&path, r#"{"profile": "p.json", "eps": ["1/4"]}"#).unwrap();
    let cfg = SweepConfig::load(&path).unwrap();
    assert_eq!(cfg.profile, Some(dir.join("p.json")));
    assert_eq!(cfg.alpha, vec![1.0, 1.5, 2.0]);
    assert_eq!(cfg.count, 3);
}

#[test]
fn cell_k_of_constant_and_doubled_profiles() {
    let dir = scratch("cellk");
    let one = run_cell_k(&write_profile(&dir, &OscillationProfile::constant(1, 1.0).unwrap()), 64).unwrap();
    assert_eq!((one.k_energy, one.k_boundary, one.k_testfunction), (0.0, 0.0, 0.0));
    let base = run_cell_k(&write_profile(&dir, &OscillationProfile::cosine(1.0, 1.0).unwrap()), 64).unwrap();
    let twice = run_cell_k(&write_profile(&dir, &OscillationProfile::cosine(2.0, 2.0).unwrap()), 64).unwrap();
    assert!(base.agrees());
    for (a, b) in [
        (base.k_energy, twice.k_energy),
        (base.k_boundary, twice.k_boundary),
        (base.k_testfunction, twice.k_testfunction),
    ] {
        assert!((b / a - 4.0).abs() < 1e-12);
    }
}
