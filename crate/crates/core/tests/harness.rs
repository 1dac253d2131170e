use dirichlet_w2::harness::*;
use dirichlet_w2::*;

fn dirichlet_cfg() -> ExperimentConfig {
    ExperimentConfig::new(
        Domain::unit_interval(Boundary::Dirichlet),
        NuSpec::Reference,
    )
}

const FULL: &str = r#"{
  "version": "1",
  "domain": {
    "shape": {"kind": "interval", "bounds": [0.0, 1.0]},
    "boundary": "dirichlet",
    "potential": {"kind": "zero"}
  },
  "nu": {"kind": "point", "x": [0.25]},
  "times": [1.0, 3.0],
  "truncation": {"modes": 64, "series_tol": 0.05, "limit_tol": 1e-6},
  "transport": {"method": "exact-discrete", "atoms": 128},
  "sandwich": {"theta": [1.0]},
  "mc": {"horizon": 1.0, "n_paths": 1000},
  "seed": 7,
  "gap_tolerance": 0.2
}"#;

#[test]
fn config_round_trip() {
    let c = ExperimentConfig::from_json_str(FULL).unwrap();
    assert_eq!(c.nu, NuSpec::Point(vec![0.25]));
    assert_eq!(c.transport.method, MethodChoice::ExactDiscrete);
    assert_eq!(c.truncation.modes, 64);
    assert_eq!(c.truncation.sl_grid, 2000);
    assert_eq!(c.mc.as_ref().unwrap().dt, 1e-3);
    let back = ExperimentConfig::from_json_str(&c.to_json()).unwrap();
    assert_eq!(back, c);
    let minimal = r#"{"version": "1", "nu": {"kind": "reference"},
        "domain": {"shape": {"kind": "interval", "bounds": [0, 2]}, "boundary": "neumann"}}"#;
    let m = ExperimentConfig::from_json_str(minimal).unwrap();
    assert_eq!(m.times, vec![2.0, 4.0, 8.0, 16.0]);
}

#[test]
fn config_rejections() {
    let bad = [
        FULL.replace("\"seed\"", "\"sed\""),
        FULL.replace("\"version\": \"1\"", "\"version\": \"2\""),
        FULL.replace("[1.0, 3.0]", "[3.0, 1.0]"),
        FULL.replace("[1.0, 3.0]", "[]"),
        FULL.replace("\"series_tol\"", "\"series_tolerance\""),
        FULL.replace(
            "\"point\", \"x\": [0.25]",
            "\"file\", \"file\": \"nope.csv\"",
        ),
        FULL.replace("\"point\"", "\"comet\""),
        FULL.replace("\"exact-discrete\"", "\"simplex\""),
        FULL.replace("\"theta\": [1.0]", "\"theta\": [0.0]"),
    ];
    for (k, text) in bad.iter().enumerate() {
        assert!(
            matches!(ExperimentConfig::from_json_str(text), Err(Error::Config(_))),
            "case {k}"
        );
    }
}

#[test]
fn density_file_resolves_against_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let csv: String = std::iter::once("x,density\n".to_string())
        .chain((0..=50).map(|k| format!("{},{}\n", k as f64 / 50.0, 1.0)))
        .collect();
    std::fs::write(dir.path().join("nu.csv"), csv).unwrap();
    let text = FULL.replace("\"point\", \"x\": [0.25]", "\"file\", \"file\": \"nu.csv\"");
    let path = dir.path().join("exp.json");
    std::fs::write(&path, &text).unwrap();
    assert!(ExperimentConfig::from_json_str(&text).is_err());
    let c = ExperimentConfig::load(&path).unwrap();
    let b = c.basis().unwrap();
    let nu = c.initial(&b).unwrap();
    let p = project(&nu, &b).unwrap();
    let r = project(&InitialDistribution::Reference, &b).unwrap();
    assert!((p.values[0] - r.values[0]).abs() < 1e-6);
}

#[test]
fn convergence_for_reference_start() {
    let c = dirichlet_cfg();
    let r = run_convergence(&c).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert!(r.rows[0].relative_gap.abs() <= 0.35);
    assert!(r.rows[3].relative_gap.abs() <= 0.1);
    assert!(r
        .rows
        .windows(2)
        .all(|w| w[1].relative_gap.abs() < w[0].relative_gap.abs()));
    assert!(r.monotone_tail && r.passed);
    let fit = r.fit.unwrap();
    assert!((0.7..=1.3).contains(&fit.exponent), "{fit:?}");
    for row in &r.rows {
        let p = &row.provenance;
        assert_eq!(p.method, "quantile1d");
        assert!(p.series_tail <= p.series_tol);
        assert!(p.method_error.is_finite() && row.limit_tail.is_finite());
        let lo = row.lower_bound.unwrap();
        assert!(lo <= row.w2_squared && row.w2_squared <= row.upper_bound);
    }
    // Deterministic given the config.
    let again = run_convergence(&c).unwrap();
    assert_eq!(
        serde_json::to_string(&r).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}

#[test]
fn starting_from_the_limit_still_moves() {
    let mut c = dirichlet_cfg();
    c.nu = NuSpec::GroundState;
    let r = run_convergence(&c).unwrap();
    assert!(r.limit.value > 1e-9);
    assert!(r.rows.iter().all(|row| row.w2_squared > 0.0));
    assert!(r
        .rows
        .windows(2)
        .all(|w| w[1].relative_gap.abs() < w[0].relative_gap.abs()));
}

#[test]
fn reflecting_point_mass_reaches_closed_form() {
    let mut c = ExperimentConfig::new(
        Domain::unit_interval(Boundary::Neumann),
        NuSpec::Point(vec![0.0]),
    );
    c.truncation.modes = 2000;
    c.times = vec![16.0];
    let r = run_convergence(&c).unwrap();
    let row = &r.rows[0];
    assert!(
        (row.scaled / (2.0 / 945.0) - 1.0).abs() <= 0.02,
        "{}",
        row.scaled
    );
    assert!(row.lower_bound.is_none());
    assert!((r.limit.value - 2.0 / 945.0).abs() < 1e-9);
}

#[test]
fn doubling_modes_respects_reported_bounds() {
    let mut c = dirichlet_cfg();
    c.times = vec![4.0];
    c.truncation.modes = 64;
    let a = run_convergence(&c).unwrap();
    c.truncation.modes = 128;
    let b = run_convergence(&c).unwrap();
    assert!((a.limit.value - b.limit.value).abs() <= a.limit.tail_bound);
    assert!((a.rows[0].w2 - b.rows[0].w2).abs() <= c.truncation.series_tol);
}

#[test]
fn failures_carry_the_time() {
    let mut c = dirichlet_cfg();
    c.truncation.series_tol = 1e-12;
    c.times = vec![3.0];
    match run_convergence(&c) {
        Err(Error::AtTime { t, source }) => {
            assert_eq!(t, 3.0);
            assert!(matches!(*source, Error::Truncation { .. }));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn sandwich_is_ordered_and_tightens() {
    let c = dirichlet_cfg();
    let mut ratios = Vec::new();
    for t in [2.0, 4.0, 8.0] {
        let s = run_sandwich(&c, t).unwrap();
        assert!(s.lower < s.w2_squared && s.w2_squared < s.upper, "{s:?}");
        assert!(s.ordered);
        ratios.push(s.upper_ratio);
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]));
    assert!((1.0..=2.0).contains(&ratios[2]));
    let n = ExperimentConfig::new(Domain::unit_interval(Boundary::Neumann), NuSpec::Reference);
    assert!(matches!(run_sandwich(&n, 2.0), Err(Error::Unsupported(_))));
}

#[test]
fn alternative_methods_in_the_pipeline() {
    let mut c = dirichlet_cfg();
    c.times = vec![2.0];
    let q = run_convergence(&c).unwrap().rows[0].w2_squared;
    c.transport.method = MethodChoice::ExactDiscrete;
    let e = run_convergence(&c).unwrap();
    let row = &e.rows[0];
    assert_eq!(row.provenance.method, "exact-discrete");
    assert!((row.w2_squared - q).abs() <= row.provenance.method_error);
}

#[test]
fn mc_crosscheck_on_a_wide_interval() {
    let mut c = ExperimentConfig::new(
        Domain::interval(0.0, 4.0, Boundary::Dirichlet).unwrap(),
        NuSpec::Reference,
    );
    c.seed = 3;
    c.mc = Some(McSettings {
        n_paths: 20_000,
        ..McSettings::default()
    });
    let r = run_mc_crosscheck(&c).unwrap();
    assert!(r.agree, "{r:?}");
    assert!((r.survival_fraction - r.survival_spectral).abs() <= 3.0 * r.survival_se);
}

#[test]
fn reports_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = dirichlet_cfg();
    c.times = vec![2.0, 4.0];
    let r = run_convergence(&c).unwrap();
    let files = write_report(dir.path(), "convergence", &r, Some(&r.to_csv())).unwrap();
    assert_eq!(files.len(), 2);
    let csv = std::fs::read_to_string(&files[1]).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "# schema: convergence/1");
    assert!(lines
        .next()
        .unwrap()
        .starts_with("t,w2,w2_squared,scaled,limit"));
    assert_eq!(lines.count(), 2);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
    assert!(json["limit"]["I_value"].is_number());
}
