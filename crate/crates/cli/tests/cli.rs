use std::path::Path;
use std::process::{Command, Output};

fn dw2(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dw2"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn basis_and_projection_tables() {
    let d = tempfile::tempdir().unwrap();
    let o = dw2(d.path(), &["--modes", "6", "basis"]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(d.path().join("out/eigenvalues.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "m,lambda,sup_norm,ratio_sup_norm"
    );
    assert_eq!(csv.lines().count(), 7);
    let b = json(&d.path().join("out/basis.json"));
    assert_eq!(b["eigenvalues"].as_array().unwrap().len(), 6);

    let o = dw2(d.path(), &["--modes", "6", "--out", "p", "project"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(d.path().join("p/coefficients.csv")).unwrap();
    let row: Vec<f64> = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row[2], row[3]);
}

#[test]
fn limit_and_distance_reports() {
    let d = tempfile::tempdir().unwrap();
    assert!(dw2(d.path(), &["limit"]).status.success());
    let l = json(&d.path().join("out/limit.json"));
    let i = l["I_value"].as_f64().unwrap();
    assert!(i > 9.15e-7 && i < 9.17e-7);

    let o = dw2(d.path(), &["w2", "--t", "8"]);
    assert!(o.status.success());
    let w = json(&d.path().join("out/w2.json"));
    assert_eq!(w["schema"], "w2/1");
    let scaled = w["scaled"].as_f64().unwrap();
    assert!((scaled / i - 1.0).abs() < 0.01);
    assert!(w["provenance"]["series_tail"].is_number());
    assert_eq!(w["provenance"]["method"], "quantile1d");
}

#[test]
fn convergence_from_a_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "version": "1",
      "domain": {"shape": {"kind": "interval", "bounds": [0, 1]}, "boundary": "dirichlet"},
      "nu": {"kind": "reference"},
      "times": [2, 4, 8],
      "output": "results",
      "seed": 11
    }"#;
    std::fs::write(d.path().join("exp.json"), cfg).unwrap();
    let o = dw2(d.path(), &["--config", "exp.json", "converge"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("results/convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().ends_with(",11"));
    let r = json(&d.path().join("results/convergence.json"));
    assert_eq!(r["passed"], true);

    // A run that misses its gap tolerance exits with status 2.
    let strict = cfg.replace("\"seed\": 11", "\"seed\": 11, \"gap_tolerance\": 1e-9");
    std::fs::write(d.path().join("strict.json"), strict).unwrap();
    let o = dw2(
        d.path(),
        &["--config", "strict.json", "converge", "--times", "2,4"],
    );
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn sandwich_and_density() {
    let d = tempfile::tempdir().unwrap();
    let o = dw2(d.path(), &["sandwich", "--t", "4"]);
    assert!(o.status.success());
    let s = json(&d.path().join("out/sandwich.json"));
    assert_eq!(s["ordered"], true);
    assert!(s["lower"].as_f64().unwrap() < s["upper"].as_f64().unwrap());

    let o = dw2(d.path(), &["density", "--t", "2"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(d.path().join("out/density_t2.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "x,h_t,mu0_density"));
}

#[test]
fn small_mc_crosscheck() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "version": "1",
      "domain": {"shape": {"kind": "interval", "bounds": [0, 4]}, "boundary": "dirichlet"},
      "nu": {"kind": "reference"}
    }"#;
    std::fs::write(d.path().join("mc.json"), cfg).unwrap();
    let o = dw2(
        d.path(),
        &[
            "--config",
            "mc.json",
            "--seed",
            "5",
            "mc",
            "--paths",
            "5000",
            "--horizon",
            "2",
        ],
    );
    assert!(o.status.code().is_some_and(|c| c == 0 || c == 2));
    let r = json(&d.path().join("out/mc.json"));
    assert_eq!(r["seed"], 5);
    assert_eq!(r["n_paths"], 5000);
    let csv = std::fs::read_to_string(d.path().join("out/mc.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "# schema: mc/1");
}

#[test]
fn errors_are_reported() {
    let d = tempfile::tempdir().unwrap();
    let o = dw2(d.path(), &["--config", "missing.json", "limit"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));

    std::fs::write(
        d.path().join("bad.json"),
        r#"{"version": "1", "colour": 3}"#,
    )
    .unwrap();
    let o = dw2(d.path(), &["--config", "bad.json", "limit"]);
    assert_eq!(o.status.code(), Some(1));

    let o = dw2(d.path(), &["--tol", "1e-12", "w2", "--t", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t = 3"));

    assert!(!dw2(d.path(), &["w2"]).status.success());
}
