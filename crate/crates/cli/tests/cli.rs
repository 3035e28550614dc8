use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trihomog"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("trihomog-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (status.code().unwrap(), String::from_utf8_lossy(&stdout).into(), String::from_utf8_lossy(&stderr).into())
}

const COS: &str = r#"{"dim": 1, "b0": 1.0, "modes": [{"k": [1], "re": 0.5}]}"#;

fn json(path: &PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cell_k_writes_agreeing_report() {
    let dir = scratch("cellk");
    let p = dir.join("p.json");
    std::fs::write(&p, COS).unwrap();
    let out = dir.join("k.json");
    let (code, stdout, _) = run(bin().args(["cell-k", "--profile"]).arg(&p).arg("--out").arg(&out));
    assert_eq!(code, 0, "{stdout}");
    let k = json(&out);
    let e = k["k_energy"].as_f64().unwrap();
    assert!(((k["k_boundary"].as_f64().unwrap() - e) / e).abs() < 1e-9);
    assert!((e - 620.1255).abs() < 1e-3, "{e}");
}

#[test]
fn limit_spec_lists_sorted_eigenvalues() {
    let dir = scratch("limit");
    for bc in ["int", "dir", "strange"] {
        let out = dir.join(format!("{bc}.json"));
        let (code, _, err) = run(bin().args(["limit-spec", "--bc", bc, "--modes", "2", "--count", "4", "--out"]).arg(&out));
        assert_eq!(code, 0, "{bc}: {err}");
        let v = json(&out);
        let eigs: Vec<f64> = v["eigs"].as_array().unwrap().iter().map(|e| e["lambda"].as_f64().unwrap()).collect();
        assert_eq!(eigs.len(), 4);
        assert!(eigs.windows(2).all(|w| w[0] <= w[1]));
    }
    let out = dir.join("k.json");
    let (code, stdout, _) = run(bin().args(["limit-spec", "--bc", "strange", "--K", "0", "--modes", "0", "--count", "1", "--out"]).arg(&out));
    assert_eq!(code, 0);
    assert!(stdout.contains("2.03524"), "{stdout}");
}

#[test]
fn eps_spec_on_a_small_case() {
    let dir = scratch("eps");
    let p = dir.join("p.json");
    std::fs::write(&p, COS).unwrap();
    let out = dir.join("e.json");
    let (code, stdout, err) = run(bin()
        .env("TRIHOMOG_THREADS", "1")
        .args(["eps-spec", "--profile"])
        .arg(&p)
        .args(["--alpha", "2", "--eps", "1/2", "--count", "2", "--elements-per-period", "4", "--layer-elements", "4", "--out"])
        .arg(&out));
    assert_eq!(code, 0, "{stdout}{err}");
    let v = json(&out);
    assert_eq!(v["eps"].as_f64(), Some(0.5));
    assert_eq!(v["eigs"].as_array().unwrap().len(), 2);
}

#[test]
fn converge_writes_tables() {
    let dir = scratch("conv");
    let cfg = dir.join("c.json");
    std::fs::write(
        &cfg,
        r#"{"alpha": [2.0], "eps": ["1/2", 0.25], "count": 2, "modes": 2,
            "mesh": {"elements_per_period": 4, "layer_elements": 4, "limit_elements": 16}}"#,
    )
    .unwrap();
    let out = dir.join("out");
    let (code, stdout, err) = run(bin().args(["converge", "--config"]).arg(&cfg).arg("--out").arg(&out));
    assert_eq!(code, 0, "{stdout}{err}");
    let csv = std::fs::read_to_string(out.join("table.csv")).unwrap();
    assert!(csv.starts_with("alpha,eps,j,lambda_eps"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn converge_fails_loudly_on_the_opposite_strange_sign() {
    let dir = scratch("sign");
    let cfg = dir.join("c.json");
    std::fs::write(
        &cfg,
        r#"{"alpha": [1.5], "eps": ["1/4"], "count": 1, "modes": 2,
            "mesh": {"elements_per_period": 4, "layer_elements": 4, "limit_elements": 16}}"#,
    )
    .unwrap();
    let (code, _, err) = run(bin().args(["converge", "--config"]).arg(&cfg).arg("--out").arg(dir.join("out")));
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("d_hat(literal −K)") && err.contains("d_hat(flipped +K)"), "{err}");
}

#[test]
fn verify_passes_and_detects_tampering() {
    let (code, stdout, _) = run(bin().args(["verify", "--level", "fast"]));
    assert_eq!(code, 0, "{stdout}");
    assert!(!stdout.contains("FAIL"));
    let (code, stdout, err) = run(bin().args(["verify", "--level", "fast", "--tamper-mode-constant", "5.5"]));
    assert_eq!(code, 1);
    assert!(stdout.contains("FAIL cell.universal_mode_constant"));
    assert!(err.contains("cell.universal_mode_constant"));
}

#[test]
fn input_errors_exit_2() {
    let dir = scratch("bad");
    let missing = dir.join("nope.json");
    let out = dir.join("o.json");
    let bad_cfg = dir.join("bad.json");
    std::fs::write(&bad_cfg, r#"{"alpha": [1.0], "eps": [0.3]}"#).unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["limit-spec".into(), "--bc".into(), "neumann".into(), "--modes".into(), "1".into(), "--count".into(), "1".into(), "--out".into(), out.display().to_string()],
        vec!["limit-spec".into(), "--bc".into(), "strange".into(), "--K".into(), "abc".into(), "--modes".into(), "1".into(), "--count".into(), "1".into(), "--out".into(), out.display().to_string()],
        vec!["cell-k".into(), "--profile".into(), missing.display().to_string(), "--out".into(), out.display().to_string()],
        vec!["eps-spec".into(), "--profile".into(), missing.display().to_string(), "--alpha".into(), "2".into(), "--eps".into(), "1/4".into(), "--count".into(), "1".into(), "--out".into(), out.display().to_string()],
        vec!["converge".into(), "--config".into(), bad_cfg.display().to_string(), "--out".into(), dir.display().to_string()],
        vec!["verify".into(), "--level".into(), "medium".into()],
        vec!["frobnicate".into()],
    ];
    for args in cases {
        let (code, _, err) = run(bin().args(&args));
        assert_eq!(code, 2, "{args:?}: {err}");
    }
    let (code, _, _) = run(bin().env("TRIHOMOG_THREADS", "0").args(["verify"]));
    assert_eq!(code, 2);
}
