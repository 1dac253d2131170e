use std::f64::consts::PI;

use dirichlet_w2::harness::{ExperimentConfig, MethodChoice, NuSpec};
use dirichlet_w2::limit::{compute_I, limit_for};
use dirichlet_w2::mc::{simulate, SimulationConfig};
use dirichlet_w2::semigroup::*;
use dirichlet_w2::transport::*;
use dirichlet_w2::*;
use proptest::prelude::*;

fn unit(m: usize) -> SpectralBasis {
    build_analytic_basis(&Domain::unit_interval(Boundary::Dirichlet), m).unwrap()
}

/// 1 + Σ c_k cos(2πkx) + s_k sin(2πkx): unit mass on [0, 1], positive when
/// Σ|c_k| + |s_k| < 1.
fn trig(c: Vec<f64>) -> impl Fn(f64) -> f64 + Clone {
    move |x| {
        1.0 + c
            .chunks(2)
            .enumerate()
            .map(|(k, cs)| {
                let w = 2.0 * PI * (k + 1) as f64 * x;
                cs[0] * w.cos() + cs[1] * w.sin()
            })
            .sum::<f64>()
    }
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.12f64..0.12, 6)
}

fn grid_measure(c: Vec<f64>) -> GridMeasure {
    GridMeasure::from_fn(0.0, 1.0, 128, 12, trig(c)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_mean_lies_between(a in 1e-6f64..1e6, b in 1e-6f64..1e6) {
        let m = log_mean(a, b);
        prop_assert!(m >= a.min(b) * (1.0 - 1e-14));
        prop_assert!(m <= a.max(b) * (1.0 + 1e-14));
        prop_assert_eq!(log_mean(a, a), a);
        prop_assert!((log_mean(b, a) - m).abs() <= 1e-12 * m);
    }

    #[test]
    fn time_integral_branches_meet(
        a in 0.0f64..400.0,
        t in 0.01f64..10.0,
        d in prop::sample::select(vec![1e-8, -1e-8, 3e-9, -3e-9]),
    ) {
        let b = (a + d).max(0.0);
        let closed = time_integral_closed(a, b, t);
        let taylor = time_integral_taylor(a, b, t);
        let scale = time_integral(a, a, t).max(1e-300);
        prop_assert!((closed - taylor).abs() <= 1e-12 * scale.max(closed));
        // Moving off the diagonal changes the value by at most |d|·t²/2 ·e^{−min·t}.
        let lip = d.abs() * t * t * (-(a.min(b)) * t).exp();
        prop_assert!((time_integral(a, b, t) - time_integral(a, a, t)).abs() <= lip + 1e-15 * scale);
    }

    #[test]
    fn time_integral_matches_quadrature(
        m in 0usize..30,
        n in 0usize..30,
        t in 0.05f64..3.0,
    ) {
        let a = ((m + 1) * (m + 1) - 1) as f64 * PI * PI;
        let b = ((n + 1) * (n + 1) - 1) as f64 * PI * PI;
        let q = dirichlet_w2::quadrature::adaptive(&|s: f64| (-a * s - b * (t - s)).exp(), 0.0, t, 1e-15);
        prop_assert!((time_integral(a, b, t) - q).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metric_axioms(p in coeffs(), q in coeffs(), r in coeffs()) {
        let (p, q, r) = (grid_measure(p), grid_measure(q), grid_measure(r));
        let d = |a: &GridMeasure, b: &GridMeasure| w2_quantile_1d(a, b, 20_000).unwrap().w2;
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-9);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-8);
        prop_assert!(d(&p, &p) < 1e-12);
    }

    #[test]
    fn ratio_gradient_matches_differences(x in 0.05f64..0.95, slope in -2.0f64..2.0) {
        let plain = unit(8);
        let d = Domain::unit_interval(Boundary::Dirichlet)
            .with_potential(Potential::Tabulated(
                TabulatedPotential::from_fn(0.0, 1.0, 33, move |x| slope * x).unwrap(),
            ))
            .unwrap();
        let tilted = solve_sturm_liouville(&d, 8, 200).unwrap();
        for b in [&plain, &tilted] {
            let m = b.mode_count();
            let (mut g, mut grad) = (vec![0.0; m], vec![0.0; m]);
            b.eval_ratio_with_gradient(&[x], &mut g, &mut grad);
            let h = 1e-5;
            let (mut up, mut dn, mut scratch) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            b.eval_ratio_with_gradient(&[x + h], &mut up, &mut scratch);
            b.eval_ratio_with_gradient(&[x - h], &mut dn, &mut scratch);
            for k in 0..m {
                let fd = (up[k] - dn[k]) / (2.0 * h);
                let tol = 1e-6 * (k + 1).pow(3) as f64 * (1.0 + grad[k].abs());
                prop_assert!((fd - grad[k]).abs() <= tol, "k={} {} vs {}", k, fd, grad[k]);
            }
            prop_assert!((g[0] - 1.0).abs() < 1e-12 && grad[0].abs() < 1e-9);
        }
    }

    #[test]
    fn semigroup_property(c in prop::collection::vec(-1.0f64..1.0, 5), s in 0.01f64..0.2, t in 0.01f64..0.2) {
        let b = unit(32);
        let grid_f: Vec<f64> = (0..b.grid().len())
            .map(|i| (0..5).map(|k| c[k] * b.eigenfunction(k)[i]).sum())
            .collect();
        let f = ModeCoefficients::of_function(&b, &grid_f);
        let once = apply_dirichlet_semigroup(&b, &f, s + t, 1e-8).unwrap();
        let first = apply_dirichlet_semigroup(&b, &f, t, 1e-8).unwrap();
        let g = ModeCoefficients::of_function(&b, &first.values);
        let twice = apply_dirichlet_semigroup(&b, &g, s, 1e-8).unwrap();
        for (u, v) in once.values.iter().zip(&twice.values) {
            prop_assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn kernel_has_unit_mass(t in prop::sample::select(vec![0.05, 0.5, 5.0]), x in 0.02f64..0.98) {
        let b = unit(128);
        let g = b.grid();
        let phi0 = b.eigenfunction(0);
        let ys: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0]).collect();
        let k: Vec<f64> = ys
            .iter()
            .map(|y| ground_kernel(&b, &[x], &[*y], t, 1e-6).map(|r| r.0).unwrap_or(0.0))
            .collect();
        let mass = g.integrate(&k.iter().zip(phi0).map(|(v, f)| v * f * f).collect::<Vec<_>>());
        prop_assert!((mass - 1.0).abs() < 1e-6, "{}", mass);
    }

    #[test]
    fn conditional_density_has_unit_mass_and_centred_rho(c in coeffs(), t in 1.5f64..10.0) {
        let b = unit(128);
        let nu = InitialDistribution::density_fn(&b, |p| trig(c.clone())(p[0]));
        let h = conditional_density(&b, &nu, t, 1e-2).unwrap();
        prop_assert!((h.mass(&b) - 1.0).abs() < 1e-10);
        let r = rho_tilde(&b, &h.nu_coeffs, &h.mu_coeffs, t, h.normalization).unwrap();
        let phi0 = b.eigenfunction(0);
        let mean = b.grid().integrate(
            &r.values.iter().zip(phi0).map(|(v, f)| v * f * f).collect::<Vec<_>>(),
        );
        prop_assert!(mean.abs() < 1e-13);
    }

    #[test]
    fn limit_is_sign_symmetric_and_tail_bounded(c in coeffs(), flip in 1usize..16) {
        let small = unit(32);
        let big = unit(64);
        let f = |p: &[f64]| trig(c.clone())(p[0]);
        let nu_s = InitialDistribution::density_fn(&small, f);
        let nu_b = InitialDistribution::density_fn(&big, f);
        let a = limit_for(&small, &nu_s, 1.0).unwrap();
        let z = limit_for(&big, &nu_b, 1.0).unwrap();
        prop_assert!((a.value - z.value).abs() <= a.tail_bound);

        let mut nu = project(&nu_s, &small).unwrap();
        let mut mu = ModeCoefficients::reference(&small);
        let base = compute_I(&nu, &mu, small.eigenvalues(), 1, 1.0).unwrap().value;
        nu.values[flip] = -nu.values[flip];
        mu.values[flip] = -mu.values[flip];
        let flipped = compute_I(&nu, &mu, small.eigenvalues(), 1, 1.0).unwrap().value;
        prop_assert!((base - flipped).abs() <= 1e-15 * base.abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sandwich_holds_for_smooth_starts(c in coeffs(), t in 1.5f64..8.0) {
        let b = unit(128);
        let nu = InitialDistribution::density_fn(&b, |p| trig(c.clone())(p[0]));
        let h = conditional_density(&b, &nu, t, 1e-2).unwrap();
        let mt = GridMeasure::from_conditional(&h, &b).unwrap();
        let m0 = GridMeasure::ground_measure(&b).unwrap();
        let w = w2_quantile_1d(&m0, &mt, DEFAULT_QUANTILE_NODES).unwrap();
        let slack = w.error_estimate + 1e-9 * w.w2_squared;
        let upper = h_minus1_upper_bound(&h, &b).unwrap().value;
        let rc = rho_tilde_coefficients(&b, &h.nu_coeffs, &h.mu_coeffs, h.t_effective, h.normalization);
        let f = inverse_generator_potential(&b, &rc).unwrap();
        let lower = kantorovich_dual_lower(&m0, &mt, &f).unwrap().value;
        prop_assert!(lower <= w.w2_squared + slack, "{} {}", lower, w.w2_squared);
        prop_assert!(w.w2_squared <= upper + slack, "{} {}", w.w2_squared, upper);
    }

    #[test]
    fn config_round_trips(
        modes in 2usize..400,
        tol in 1e-6f64..0.5,
        times in prop::collection::btree_set(1u32..200, 1..6),
        seed in any::<u64>(),
        method in prop::sample::select(vec![
            MethodChoice::Quantile1d, MethodChoice::ExactDiscrete, MethodChoice::Entropic,
        ]),
        x in 0.01f64..0.99,
    ) {
        let mut c = ExperimentConfig::new(Domain::unit_interval(Boundary::Neumann), NuSpec::Point(vec![x]));
        c.truncation.modes = modes;
        c.truncation.series_tol = tol;
        c.times = times.iter().map(|v| *v as f64 / 8.0).collect();
        c.seed = seed;
        c.transport.method = method;
        let back = ExperimentConfig::from_json_str(&c.to_json()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn ensembles_are_reproducible(seed in any::<u64>(), x in 0.5f64..3.5) {
        let d = Domain::interval(0.0, 4.0, Boundary::Dirichlet).unwrap();
        let mut c = SimulationConfig::new(d, InitialDistribution::point(x), 0.3);
        c.n_paths = 2000;
        c.seed = seed;
        c.bootstrap = 10;
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate(&c).unwrap())
        };
        let (a, b) = (run(1), run(2));
        prop_assert_eq!(a.survival_count, b.survival_count);
        prop_assert_eq!(&a.occupation, &b.occupation);
        prop_assert_eq!(&a.terminal_se, &b.terminal_se);
        let again = run(1);
        prop_assert_eq!(&a.terminal, &again.terminal);
    }
}
