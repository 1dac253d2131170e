use std::f64::consts::PI;

use dirichlet_w2::quadrature::adaptive;
use dirichlet_w2::semigroup::*;
use dirichlet_w2::spectral::build_analytic_basis;
use dirichlet_w2::*;

fn unit(m: usize) -> SpectralBasis {
    build_analytic_basis(&Domain::unit_interval(Boundary::Dirichlet), m).unwrap()
}

#[test]
fn semigroup_identity_at_zero() {
    let b = unit(16);
    let c = ModeCoefficients::of_function(&b, b.eigenfunction(1));
    let p = apply_dirichlet_semigroup(&b, &c, 0.0, 1e-8).unwrap();
    for (a, e) in p.values.iter().zip(b.eigenfunction(1)) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn survival_mass_series() {
    let b = unit(128);
    let mu = ModeCoefficients::reference(&b);
    for t in [0.0, 0.05, 0.5] {
        let p = apply_dirichlet_semigroup(&b, &mu, t, 1e-10).unwrap();
        let s = b.grid().integrate(&p.values);
        let exact: f64 = (0..2000)
            .map(|j| (2 * j + 1) as f64)
            .map(|k| (-k * k * PI * PI * t).exp() * 8.0 / (k * k * PI * PI))
            .sum();
        if t == 0.0 {
            // The truncated series holds the Parseval sum Σ_{m<M} μ(φ_m)², whose
            // deficit from 1 is the dropped tail.
            let parseval: f64 = mu.values.iter().map(|v| v * v).sum();
            assert!((s - parseval).abs() < 1e-13);
            assert!((1.0 - s) < 4.0 / (PI * PI * 128.0) && s < 1.0);
        } else {
            assert!((s - exact).abs() < 1e-12, "t={t}: {s} vs {exact}");
            assert!(p.truncation.accepted());
        }
    }
}

#[test]
fn semigroup_decay_rate_toward_ground_state() {
    let b = unit(64);
    let f: Vec<f64> = (0..b.grid().len()).map(|i| b.grid().point(i)[0]).collect();
    let c = ModeCoefficients::of_function(&b, &f);
    let l = b.eigenvalues();
    let dev = |t: f64| {
        let p = apply_dirichlet_semigroup(&b, &c, t, 1e-8).unwrap();
        p.values
            .iter()
            .zip(b.eigenfunction(0))
            .map(|(v, phi)| ((l[0] * t).exp() * v - c.values[0] * phi).abs())
            .fold(0.0, f64::max)
    };
    let ratio = dev(1.0) / dev(0.5);
    let expect = (-(l[1] - l[0]) * 0.5).exp();
    assert!((ratio / expect - 1.0).abs() < 0.05, "{ratio} vs {expect}");
}

#[test]
fn kernel_mass_symmetry_and_decay() {
    let b = unit(128);
    let g = b.grid();
    let phi0 = b.eigenfunction(0);
    let w0: Vec<f64> = g
        .weights()
        .iter()
        .zip(phi0)
        .map(|(w, f)| w * f * f)
        .collect();
    let n = g.len();
    for t in [0.05, 0.5, 5.0] {
        let (k, _) = ground_kernel_matrix(&b, t);
        for i in (0..n).step_by(7) {
            let mass: f64 = (0..n).map(|j| k[i * n + j] * w0[j]).sum();
            assert!((mass - 1.0).abs() < 1e-7, "t={t} mass={mass}");
        }
    }
    let (v1, tr) = ground_kernel(&b, &[0.3], &[0.71], 0.05, 1e-7).unwrap();
    let (v2, _) = ground_kernel(&b, &[0.71], &[0.3], 0.05, 1e-7).unwrap();
    assert_eq!(v1, v2);
    assert!(tr.accepted());
    let gap = b.eigenvalues()[1] - b.eigenvalues()[0];
    let sup = |t: f64| {
        let (k, _) = ground_kernel_matrix(&b, t);
        k.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    };
    let c = sup(0.5) / (-gap * 0.5).exp();
    assert!(sup(1.0) <= 1.01 * c * (-gap).exp());
}

#[test]
fn kernel_reports_required_modes_for_tiny_times() {
    let b = unit(8);
    match ground_kernel(&b, &[0.5], &[0.5], 1e-4, 1e-8) {
        Err(Error::Truncation { required_modes, .. }) => assert!(required_modes > 8),
        other => panic!("expected truncation error, got {other:?}"),
    }
    assert!(ground_kernel(&b, &[0.0], &[0.5], 1.0, 1e-8).is_err());
}

#[test]
fn semigroup_property_on_grid() {
    let b = unit(32);
    let g = b.grid();
    let n = g.len();
    let phi0 = b.eigenfunction(0);
    let w0: Vec<f64> = g
        .weights()
        .iter()
        .zip(phi0)
        .map(|(w, f)| w * f * f)
        .collect();
    let f: Vec<f64> = (0..n)
        .map(|i| 0.3 * b.ground_ratio(1)[i] - 0.2 * b.ground_ratio(4)[i] + 1.0)
        .collect();
    let apply = |t: f64, v: &[f64]| -> Vec<f64> {
        let (k, _) = ground_kernel_matrix(&b, t);
        (0..n)
            .map(|i| (0..n).map(|j| k[i * n + j] * w0[j] * v[j]).sum())
            .collect()
    };
    let lhs = apply(0.02, &apply(0.03, &f));
    let rhs = apply(0.05, &f);
    for (a, c) in lhs.iter().zip(&rhs) {
        assert!((a - c).abs() < 1e-8);
    }
}

#[test]
fn psi_single_mode_and_decay() {
    let b = unit(32);
    let mut c = ModeCoefficients::reference(&b);
    c.values.iter_mut().skip(1).for_each(|v| *v = 0.0);
    let p = psi_s_nu(&b, &c, 0.7, 1e-10).unwrap();
    assert!(p.values.iter().all(|v| (v - c.values[0]).abs() < 1e-14));

    let nu0 = project(&InitialDistribution::ground_state(&b), &b).unwrap();
    let gap = b.eigenvalues()[2] - b.eigenvalues()[0];
    let dev = |s: f64| {
        psi_s_nu(&b, &nu0, s, 1e-10)
            .unwrap()
            .values
            .iter()
            .map(|v| (v - nu0.values[0]).abs())
            .fold(0.0, f64::max)
    };
    // μ_0 is symmetric, so the first surviving mode is m = 2.
    let ratio = dev(0.4) / dev(0.2);
    assert!((ratio / (-gap * 0.2).exp() - 1.0).abs() < 0.05);
}

#[test]
fn psi_identity_with_dirichlet_semigroup() {
    let b = unit(64);
    let nu = InitialDistribution::ground_state(&b);
    let c = project(&nu, &b).unwrap();
    let h = match &nu {
        InitialDistribution::Density { h, .. } => h.clone(),
        _ => unreachable!(),
    };
    let s = 0.03;
    let psi = psi_s_nu(&b, &c, s, 1e-6).unwrap();
    let phi0 = b.eigenfunction(0);
    let lhs: f64 = b.grid().integrate(
        &psi.values
            .iter()
            .zip(phi0)
            .map(|(p, f)| p * f)
            .collect::<Vec<_>>(),
    );
    let p1 = apply_dirichlet_semigroup(&b, &ModeCoefficients::reference(&b), s, 1e-6).unwrap();
    let nu_p1 = b.grid().integrate(
        &h.iter()
            .zip(&p1.values)
            .map(|(a, c)| a * c)
            .collect::<Vec<_>>(),
    );
    let rhs = (b.eigenvalues()[0] * s).exp() * nu_p1;
    assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
}

#[test]
fn conditional_density_is_probability() {
    let b = unit(128);
    let h = conditional_density(&b, &InitialDistribution::Reference, 0.5, 1e-1).unwrap();
    let w = b.grid().weights();
    let phi0 = b.eigenfunction(0);
    let mean: f64 = h
        .rho
        .iter()
        .zip(w)
        .zip(phi0)
        .map(|((r, w), f)| r * w * f * f)
        .sum();
    assert!(mean.abs() < 1e-8);
    assert!((h.mass(&b) - 1.0).abs() < 1e-6);
}

#[test]
fn rho_minus_rho_tilde_decays_at_spectral_gap() {
    // On [0, 2] the gap is small enough for e^{-(λ1-λ0)t} to be resolved in
    // double precision at t = 1.5; an asymmetric density keeps ν(φ_1) ≠ 0.
    let d = Domain::interval(0.0, 2.0, Boundary::Dirichlet).unwrap();
    let b = build_analytic_basis(&d, 96).unwrap();
    let nu = InitialDistribution::density_fn(&b, |x| 1.0 + 0.5 * (x[0] - 1.0));
    let gap = b.eigenvalues()[1] - b.eigenvalues()[0];
    let l1 = |t: f64| {
        let h = conditional_density(&b, &nu, t, 1.0).unwrap();
        let nc = project(&nu, &b).unwrap();
        let mc = ModeCoefficients::reference(&b);
        let rt = rho_tilde(&b, &nc, &mc, t, h.normalization).unwrap();
        let phi0 = b.eigenfunction(0);
        let v: Vec<f64> = h
            .rho
            .iter()
            .zip(&rt.values)
            .zip(phi0)
            .map(|((a, c), f)| (a - c).abs() * f * f)
            .collect();
        b.grid().integrate(&v)
    };
    let (e1, e2) = (l1(1.0), l1(1.5));
    let rate = (e1 / e2).ln() / 0.5;
    assert!((rate / gap - 1.0).abs() < 0.25, "rate {rate} vs gap {gap}");
    let scaled = (e1 / (1.5 * e2)).ln() / 0.5;
    assert!(
        (scaled / gap - 1.0).abs() < 0.05,
        "scaled rate {scaled} vs gap {gap}"
    );
}

#[test]
fn rho_tilde_properties() {
    let b = unit(128);
    let nu = ModeCoefficients::reference(&b);
    let phi0 = b.eigenfunction(0);
    let mut scaled = Vec::new();
    let mut mins = Vec::new();
    for t in [2.0, 4.0, 8.0] {
        let h = conditional_density(&b, &InitialDistribution::Reference, t, 1.0).unwrap();
        let r = rho_tilde(&b, &nu, &nu, t, h.normalization).unwrap();
        let m: f64 = b.grid().integrate(
            &r.values
                .iter()
                .zip(phi0)
                .map(|(v, f)| v * f * f)
                .collect::<Vec<_>>(),
        );
        assert!(m.abs() < 1e-14);
        scaled.push(r.values.iter().map(|v| v * t).collect::<Vec<_>>());
        mins.push(t * r.values.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    let drift = (-(b.eigenvalues()[2] - b.eigenvalues()[0]) * 2.0).exp();
    for (a, c) in scaled[0].iter().zip(&scaled[1]) {
        assert!((a - c).abs() <= drift.max(1e-14) * a.abs().max(1.0));
    }
    assert!(mins
        .windows(2)
        .all(|w| (w[0] - w[1]).abs() < 1e-10 * w[0].abs()));
    assert!(mins[0] < 0.0);
}

#[test]
fn time_shift_point_mass() {
    let b = unit(64);
    let nu = InitialDistribution::point(0.5);
    let eps = 0.01;
    let shifted = time_shift(&b, &nu, eps).unwrap();
    let raw = project(&nu, &b).unwrap();
    let formula = time_shift_coefficients(&b, &raw, eps).unwrap();
    let mu = b.mu_coefficients();
    let mass: f64 = formula.values.iter().zip(&mu).map(|(a, c)| a * c).sum();
    assert!((mass - 1.0).abs() < 1e-8);
    let projected = project(&shifted, &b).unwrap();
    for m in 0..64 {
        assert!(
            (projected.values[m] - formula.values[m]).abs() < 1e-7,
            "m={m}"
        );
    }
}

#[test]
fn time_shift_of_smooth_density_converges() {
    let b = unit(64);
    let nu = InitialDistribution::density_fn(&b, |x| 1.0 + 0.8 * (2.0 * PI * x[0]).cos());
    let h0 = match &nu {
        InitialDistribution::Density { h, .. } => h.clone(),
        _ => unreachable!(),
    };
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&e| match time_shift(&b, &nu, e).unwrap() {
            InitialDistribution::Density { h, .. } => {
                let d: Vec<f64> = h.iter().zip(&h0).map(|(a, c)| (a - c).powi(2)).collect();
                b.grid().integrate(&d).sqrt()
            }
            _ => unreachable!(),
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn closed_form_time_integral_matches_quadrature() {
    let mut state = 0x2545F4914F6CDD1Du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..20 {
        let m = (next() * 30.0) as usize;
        let n = (next() * 30.0) as usize;
        let t = 0.05 + 3.0 * next();
        let a = ((m + 1) * (m + 1) - 1) as f64 * PI * PI;
        let bb = ((n + 1) * (n + 1) - 1) as f64 * PI * PI;
        let f = |s: f64| (-a * s - bb * (t - s)).exp();
        let q = adaptive(&f, 0.0, t, 1e-15);
        assert!(
            (time_integral(a, bb, t) - q).abs() < 1e-9,
            "m={m} n={n} t={t}"
        );
    }
}

#[test]
fn neumann_mean_density_integrates_to_one() {
    let b = build_analytic_basis(&Domain::unit_interval(Boundary::Neumann), 256).unwrap();
    let h = conditional_density(&b, &InitialDistribution::point(0.0), 4.0, 1.0).unwrap();
    assert!((b.grid().integrate(&h.values) - 1.0).abs() < 1e-12);
    assert!(h.nonnegative);
}

#[test]
fn point_mass_density_uses_shift() {
    let b = unit(128);
    let h = conditional_density(&b, &InitialDistribution::point(0.3), 4.0, 1.0).unwrap();
    assert_eq!(h.time_shift, Some(1.0 / 16.0));
    assert!((h.t_effective - (4.0 - 1.0 / 16.0)).abs() < 1e-15);
    assert!((h.mass(&b) - 1.0).abs() < 1e-6);
}
