use std::f64::consts::{PI, SQRT_2};

use dirichlet_w2::measure::density_lp_norm;
use dirichlet_w2::spectral::{export_basis, import_basis};
use dirichlet_w2::*;

fn dirichlet() -> Domain {
    Domain::unit_interval(Boundary::Dirichlet)
}

fn neumann() -> Domain {
    Domain::unit_interval(Boundary::Neumann)
}

fn linear_potential() -> Potential {
    Potential::Tabulated(TabulatedPotential::from_fn(0.0, 1.0, 33, |x| x).unwrap())
}

#[test]
fn sine_basis_eigenvalues_and_midpoint() {
    let b = build_analytic_basis(&dirichlet(), 3).unwrap();
    let l = b.eigenvalues();
    for (k, v) in l.iter().enumerate() {
        let f = (k + 1) as f64;
        assert!((v - f * f * PI * PI).abs() < 1e-12);
    }
    assert!((b.eval_mode(0, &[0.5]) - SQRT_2).abs() < 1e-15);
}

#[test]
fn cosine_basis_ground_state_constant() {
    let b = build_analytic_basis(&neumann(), 2).unwrap();
    assert_eq!(b.eigenvalues()[0], 0.0);
    assert!((b.eigenvalues()[1] - PI * PI).abs() < 1e-12);
    assert!(b.eigenfunction(0).iter().all(|&v| v == 1.0));
}

#[test]
fn fifty_modes_on_400_nodes_are_orthonormal() {
    let b = dirichlet_w2::spectral::build_analytic_basis_with_grid(&dirichlet(), 50, Some(400))
        .unwrap();
    assert!(b.orthonormality_residual() <= 1e-10);
}

#[test]
fn rejects_bad_requests() {
    assert!(build_analytic_basis(&dirichlet(), 0).is_err());
    let d = dirichlet().with_potential(linear_potential()).unwrap();
    assert!(build_analytic_basis(&d, 4).is_err());
}

#[test]
fn rectangle_modes_sorted_and_orthonormal() {
    let d = Domain::rectangle([0.0, 1.0], [0.0, 2.0], Boundary::Dirichlet).unwrap();
    let b = build_analytic_basis(&d, 24).unwrap();
    assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    let l0 = PI * PI * (1.0 + 0.25);
    assert!((b.eigenvalues()[0] - l0).abs() < 1e-12);
    assert!(b.orthonormality_residual() < 1e-10);
    assert!(b.eigenfunction(0).iter().all(|&v| v > 0.0));
}

#[test]
fn rectangle_weyl_slope() {
    let d = Domain::rectangle([0.0, 1.0], [0.0, 1.0], Boundary::Dirichlet).unwrap();
    let b = build_analytic_basis(&d, 64).unwrap();
    let s = b.weyl_slope();
    assert!((s - 1.0).abs() < 0.15, "slope {s}");
}

#[test]
fn interval_weyl_slope() {
    let b = build_analytic_basis(&dirichlet(), 64).unwrap();
    let s = b.weyl_slope();
    assert!((s - 2.0).abs() < 0.3, "slope {s}");
}

#[test]
fn sturm_liouville_matches_closed_form() {
    let b = solve_sturm_liouville(&dirichlet(), 20, 2000).unwrap();
    for (k, l) in b.eigenvalues().iter().enumerate() {
        let exact = ((k + 1) as f64 * PI).powi(2);
        assert!(
            ((l - exact) / exact).abs() <= 1e-6,
            "mode {k}: {l} vs {exact}"
        );
    }
    assert!(b.orthonormality_residual() <= 1e-8);
    let a = dirichlet_w2::spectral::build_analytic_basis_with_grid(&dirichlet(), 20, Some(400))
        .unwrap();
    for k in 0..20 {
        for i in 0..b.grid().len() {
            let x = b.grid().point(i);
            assert!((b.eigenfunction(k)[i] - a.eval_mode(k, x)).abs() < 1e-5);
        }
    }
}

#[test]
fn sturm_liouville_neumann_constant_mode() {
    let b = solve_sturm_liouville(&neumann(), 1, 64).unwrap();
    assert!(b.eigenvalues()[0].abs() < 1e-9);
    assert!(b.eigenfunction(0).iter().all(|v| (v - 1.0).abs() < 1e-7));
}

#[test]
fn sturm_liouville_linear_potential_self_consistent() {
    let d = dirichlet().with_potential(linear_potential()).unwrap();
    let coarse = solve_sturm_liouville(&d, 5, 200).unwrap();
    let fine = solve_sturm_liouville(&d, 5, 400).unwrap();
    for k in 0..5 {
        let (a, b) = (coarse.eigenvalues()[k], fine.eigenvalues()[k]);
        assert!(((a - b) / b).abs() < 1e-5);
    }
    // For V(x) = x the operator is unitarily equivalent to −Δ + 1/4.
    for k in 0..5 {
        let exact = ((k + 1) as f64 * PI).powi(2) + 0.25;
        assert!(((fine.eigenvalues()[k] - exact) / exact).abs() < 1e-9);
    }
    assert!(fine.orthonormality_residual() < 1e-10);
    // Sign convention: positive ground state and positive first lobe.
    for k in 0..5 {
        assert!(fine.eigenfunction(k)[0] > 0.0);
    }
}

#[test]
fn mu_coefficients_closed_form() {
    let b = build_analytic_basis(&dirichlet(), 40).unwrap();
    let c = project(&InitialDistribution::Reference, &b).unwrap();
    for (m, v) in c.values.iter().enumerate() {
        let expect = if m % 2 == 0 {
            2.0 * SQRT_2 / ((m + 1) as f64 * PI)
        } else {
            0.0
        };
        assert!((v - expect).abs() < 1e-13, "m={m}");
    }
    let total: f64 = c.values.iter().map(|v| v * v).sum();
    assert!(total <= 1.0 + 1e-8);
}

#[test]
fn point_mass_projection() {
    let b = build_analytic_basis(&dirichlet(), 8).unwrap();
    let c = project(&InitialDistribution::point(0.5), &b).unwrap();
    assert!((c.values[0] - SQRT_2).abs() < 1e-15);
    assert!(c.values[1].abs() < 1e-15);
    assert!(project(&InitialDistribution::point(0.0), &b).is_err());
    assert!(project(&InitialDistribution::point(1.2), &b).is_err());
    let n = build_analytic_basis(&neumann(), 8).unwrap();
    assert!(project(&InitialDistribution::point(0.0), &n).is_ok());
}

#[test]
fn ground_state_projection_converges_under_refinement() {
    let grids = [400, 800];
    let mut vals = Vec::new();
    for &n in &grids {
        let b = dirichlet_w2::spectral::build_analytic_basis_with_grid(&dirichlet(), 6, Some(n))
            .unwrap();
        let c = project(&InitialDistribution::ground_state(&b), &b).unwrap();
        vals.push(c.values);
    }
    for m in 0..6 {
        assert!((vals[0][m] - vals[1][m]).abs() < 1e-13);
    }
    // μ(φ_0³) = 2√2·∫ sin³(πx) dx = 2√2 · 4/(3π).
    assert!((vals[0][0] - 2.0 * SQRT_2 * 4.0 / (3.0 * PI)).abs() < 1e-13);
}

#[test]
fn density_validation() {
    let b = build_analytic_basis(&dirichlet(), 4).unwrap();
    let bad = InitialDistribution::density_fn(&b, |_| 2.0);
    assert!(project(&bad, &b).is_err());
    let neg = InitialDistribution::density_fn(&b, |x| if x[0] < 0.5 { -0.1 } else { 2.2 });
    assert!(project(&neg, &b).is_err());
    let other = build_analytic_basis(&dirichlet(), 400).unwrap();
    let foreign = InitialDistribution::density_fn(&other, |_| 1.0);
    assert!(matches!(project(&foreign, &b), Err(Error::GridMismatch)));
}

#[test]
fn raw_grid_density_projection() {
    let b = build_analytic_basis(&dirichlet(), 4).unwrap();
    let nodes: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
    let values = vec![1.0; nodes.len()];
    let c = project(&InitialDistribution::GridDensity { nodes, values }, &b).unwrap();
    let r = project(&InitialDistribution::Reference, &b).unwrap();
    for m in 0..4 {
        assert!((c.values[m] - r.values[m]).abs() < 1e-12);
    }
}

#[test]
fn growth_report_sine_basis() {
    let b = build_analytic_basis(&dirichlet(), 64).unwrap();
    let g = sup_norm_growth_report(&b).unwrap();
    for (m, s) in g.sup_norms.iter().enumerate() {
        assert!((s - SQRT_2).abs() < 1e-14);
        assert!((g.ratio_sup_norms[m] - (m + 1) as f64).abs() < 1e-12);
    }
    assert!((g.ratio_exponent - 1.0).abs() < 1e-9);
    assert!(g.ratio_exponent <= g.ratio_bound_exponent);
    assert!(!g.ratio_violation && !g.sup_violation);
    assert!(sup_norm_growth_report(&build_analytic_basis(&dirichlet(), 8).unwrap()).is_err());
}

#[test]
fn growth_report_galerkin_matches_closed_form() {
    let b = solve_sturm_liouville(&dirichlet(), 16, 400).unwrap();
    let g = sup_norm_growth_report(&b).unwrap();
    for m in 0..16 {
        assert!(
            (g.sup_norms[m] - SQRT_2).abs() < 1e-9,
            "m={m} {}",
            g.sup_norms[m]
        );
        assert!((g.ratio_sup_norms[m] - (m + 1) as f64).abs() < 1e-6);
    }
}

#[test]
fn completeness_on_doubling_sequence() {
    let mut errs = Vec::new();
    for m in [8, 16, 32, 64] {
        let b = build_analytic_basis(&dirichlet(), m).unwrap();
        let f: Vec<f64> = (0..b.grid().len())
            .map(|i| {
                let x = b.grid().point(i)[0];
                (x * (1.0 - x)).powf(1.5) * (1.0 + x)
            })
            .collect();
        let c = b.function_coefficients(&f);
        let mut r = f.clone();
        for k in 0..m {
            for (v, p) in r.iter_mut().zip(b.eigenfunction(k)) {
                *v -= c[k] * p;
            }
        }
        let e2: Vec<f64> = r.iter().map(|v| v * v).collect();
        errs.push(b.grid().integrate(&e2).sqrt());
    }
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn export_import_roundtrip() {
    for b in [
        build_analytic_basis(&dirichlet(), 6).unwrap(),
        solve_sturm_liouville(
            &dirichlet().with_potential(linear_potential()).unwrap(),
            4,
            64,
        )
        .unwrap(),
        build_analytic_basis(
            &Domain::rectangle([0.0, 1.0], [0.0, 1.5], Boundary::Neumann).unwrap(),
            5,
        )
        .unwrap(),
    ] {
        let doc = export_basis(&b);
        let text = serde_json::to_string(&doc).unwrap();
        let back = import_basis(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.eigenvalues(), b.eigenvalues());
        assert_eq!(back.eigenfunction_matrix(), b.eigenfunction_matrix());
        assert_eq!(back.grid().weights(), b.grid().weights());
        let p = vec![0.3; b.dim()];
        assert_eq!(back.eval_mode(1, &p), b.eval_mode(1, &p));
    }
}

#[test]
fn import_rejects_other_versions() {
    let b = build_analytic_basis(&dirichlet(), 3).unwrap();
    let mut doc = export_basis(&b);
    doc["version"] = serde_json::json!(99);
    assert!(import_basis(&doc).is_err());
}

#[test]
fn lp_norm_of_reference_density_is_one() {
    let b = build_analytic_basis(&dirichlet(), 3).unwrap();
    let v = density_lp_norm(&InitialDistribution::Reference, &b, 8.0 / 7.0)
        .unwrap()
        .unwrap();
    assert!((v - 1.0).abs() < 1e-12);
}
