//! Eigenseries for the Dirichlet semigroup, the ground-state transformed
//! semigroup P_t^0 and the conditional empirical density h_t^ν.

use std::sync::Arc;

use serde::Serialize;

use crate::domain::Boundary;
use crate::error::{Error, Result};
use crate::measure::{project, CoefficientKind, Envelope, InitialDistribution, ModeCoefficients};
use crate::spectral::{QuadratureGrid, SpectralBasis};

/// Mode cutoff with an estimate of the dropped tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesTruncation {
    pub modes: usize,
    pub tail_estimate: f64,
    pub target_tol: f64,
}

impl SeriesTruncation {
    pub fn accepted(&self) -> bool {
        self.tail_estimate <= self.target_tol
    }
}

/// Nodal values on the basis grid together with their truncation record.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub truncation: SeriesTruncation,
}

/// Growth model used for tail sums: λ_m − λ_0 ≥ c·m^{2/d},
/// ‖φ_m‖_∞ ≤ A·(m+1)^{1/2}, ‖φ_m/φ_0‖_∞ ≤ B·(m+1)^q with q = (d+2)/(2d).
#[derive(Debug, Clone, Copy)]
pub(crate) struct TailModel {
    pub c: f64,
    pub p: f64,
    pub lambda0: f64,
    pub sup_scale: f64,
    pub ratio_scale: f64,
    pub ratio_power: f64,
}

impl TailModel {
    pub fn new(basis: &SpectralBasis) -> Self {
        let d = basis.dim() as f64;
        let q = (d + 2.0) / (2.0 * d);
        let fit = |s: &[f64], p: f64| {
            s.iter()
                .enumerate()
                .map(|(k, v)| v / ((k + 1) as f64).powf(p))
                .fold(0.0, f64::max)
        };
        TailModel {
            c: basis.weyl_constant(),
            p: 2.0 / d,
            lambda0: basis.eigenvalues()[0],
            sup_scale: fit(basis.sup_norms(), 0.5),
            ratio_scale: fit(basis.ratio_sup_norms(), q),
            ratio_power: q,
        }
    }

    pub fn gap(&self, m: usize) -> f64 {
        self.c * (m as f64).powf(self.p)
    }

    pub fn sup(&self, m: usize) -> f64 {
        self.sup_scale * ((m + 1) as f64).sqrt()
    }

    pub fn ratio(&self, m: usize) -> f64 {
        self.ratio_scale * ((m + 1) as f64).powf(self.ratio_power)
    }
}

/// Σ_{m ≥ start} term(m) for eventually decreasing terms; infinite when the
/// terms do not become negligible within the summation budget.
pub(crate) fn tail_sum(start: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = f64::INFINITY;
    for m in start..start + 4_000_000 {
        let v = term(m);
        if !v.is_finite() {
            return f64::INFINITY;
        }
        acc += v;
        if m > start + 8 && v <= prev && v <= 1e-17 * acc.max(1e-300) {
            return acc;
        }
        if v == 0.0 && m > start + 8 {
            return acc;
        }
        prev = v;
    }
    f64::INFINITY
}

/// Smallest cutoff whose tail falls below `tol` (doubling search).
fn required_modes(current: usize, tol: f64, tail: impl Fn(usize) -> f64) -> usize {
    let mut m = current.max(1);
    while m < 1 << 24 {
        if tail(m) <= tol {
            return m;
        }
        m *= 2;
    }
    m
}

/// ∫_0^t e^{−a s} e^{−b(t−s)} ds, with a Taylor branch when |a − b|·t < 1e-6.
pub fn time_integral(a: f64, b: f64, t: f64) -> f64 {
    if (a - b).abs() * t < 1e-6 {
        time_integral_taylor(a, b, t)
    } else {
        time_integral_closed(a, b, t)
    }
}

// Both forms are symmetric in (a, b); ordering so that x ≥ 0 keeps every
// exponential bounded.
fn ordered(a: f64, b: f64, t: f64) -> (f64, f64) {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    ((hi - lo) * t, t * (-lo * t).exp())
}

/// Closed form t·e^{−bt}(1 − e^{−x})/x with x = (a − b)t, a ≥ b.
pub fn time_integral_closed(a: f64, b: f64, t: f64) -> f64 {
    let (x, base) = ordered(a, b, t);
    if x == 0.0 {
        return base;
    }
    base * (-(-x).exp_m1()) / x
}

/// Three-term expansion t·e^{−bt}(1 − x/2 + x²/6).
pub fn time_integral_taylor(a: f64, b: f64, t: f64) -> f64 {
    let (x, base) = ordered(a, b, t);
    base * (1.0 - x / 2.0 + x * x / 6.0)
}

fn check_len(basis: &SpectralBasis, c: &ModeCoefficients) -> Result<()> {
    if c.len() != basis.mode_count() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients for a basis with {} modes",
            c.len(),
            basis.mode_count()
        )));
    }
    Ok(())
}

/// P_t f = Σ_m e^{−λ_m t} μ(φ_m f) φ_m on the grid, from the coefficients of f.
/// A tail above `tol` is reported in the truncation record, not raised.
pub fn apply_dirichlet_semigroup(
    basis: &SpectralBasis,
    coeffs: &ModeCoefficients,
    t: f64,
    tol: f64,
) -> Result<GridFunction> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    check_len(basis, coeffs)?;
    let m = basis.mode_count();
    let n = basis.grid().len();
    let mut values = vec![0.0; n];
    for k in 0..m {
        let f = (-basis.eigenvalues()[k] * t).exp() * coeffs.values[k];
        if f == 0.0 {
            continue;
        }
        for (v, p) in values.iter_mut().zip(basis.eigenfunction(k)) {
            *v += f * p;
        }
    }
    let tm = TailModel::new(basis);
    let env = coeffs.envelope;
    let tail = tail_sum(m, |k| {
        env.at(k) * tm.sup(k) * (-(tm.lambda0 + tm.gap(k)) * t).exp()
    });
    Ok(GridFunction {
        values,
        truncation: SeriesTruncation {
            modes: m,
            tail_estimate: tail,
            target_tol: tol,
        },
    })
}

/// ν(P_t 1) = Σ_m e^{−λ_m t} ν(φ_m) μ(φ_m): survival probability from ν.
pub fn survival_probability(basis: &SpectralBasis, nu: &ModeCoefficients, t: f64) -> f64 {
    let mu = basis.mu_coefficients();
    basis
        .eigenvalues()
        .iter()
        .zip(&nu.values)
        .zip(&mu)
        .map(|((l, a), b)| (-l * t).exp() * a * b)
        .sum()
}

impl SpectralBasis {
    /// Writes φ_m/φ_0 at `p` for every mode.
    pub fn eval_ratio(&self, p: &[f64], out: &mut [f64]) {
        let mut grad = vec![0.0; out.len() * self.dim()];
        self.eval_ratio_with_gradient(p, out, &mut grad);
    }
}

fn kernel_tail(tm: &TailModel, m: usize, t: f64) -> f64 {
    tail_sum(m, |k| tm.ratio(k).powi(2) * (-tm.gap(k) * t).exp())
}

/// Heat kernel p_t^0(x, y) of the ground-state transformed semigroup.
pub fn ground_kernel(
    basis: &SpectralBasis,
    x: &[f64],
    y: &[f64],
    t: f64,
    tol: f64,
) -> Result<(f64, SeriesTruncation)> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time must be positive, got {t}"
        )));
    }
    for p in [x, y] {
        if !basis.domain().is_interior(p) {
            return Err(Error::BoundaryPointMass(p.to_vec()));
        }
    }
    let m = basis.mode_count();
    let tm = TailModel::new(basis);
    let tail = kernel_tail(&tm, m, t);
    let trunc = SeriesTruncation {
        modes: m,
        tail_estimate: tail,
        target_tol: tol,
    };
    if !trunc.accepted() {
        return Err(Error::Truncation {
            tail,
            tol,
            required_modes: required_modes(m, tol, |k| kernel_tail(&tm, k, t)),
        });
    }
    let (mut gx, mut gy) = (vec![0.0; m], vec![0.0; m]);
    basis.eval_ratio(x, &mut gx);
    basis.eval_ratio(y, &mut gy);
    let gaps = basis.gaps();
    let v = (0..m).map(|k| gx[k] * gy[k] * (-gaps[k] * t).exp()).sum();
    Ok((v, trunc))
}

/// p_t^0 on all pairs of grid nodes, row-major n × n.
pub fn ground_kernel_matrix(basis: &SpectralBasis, t: f64) -> (Vec<f64>, SeriesTruncation) {
    let m = basis.mode_count();
    let n = basis.grid().len();
    let gaps = basis.gaps();
    let mut g = nalgebra::DMatrix::<f64>::zeros(m, n);
    let mut ge = nalgebra::DMatrix::<f64>::zeros(m, n);
    for k in 0..m {
        let e = (-gaps[k] * t).exp();
        for (i, v) in basis.ground_ratio(k).iter().enumerate() {
            g[(k, i)] = *v;
            ge[(k, i)] = *v * e;
        }
    }
    let kmat = g.transpose() * ge;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = kmat[(i, j)];
        }
    }
    let tm = TailModel::new(basis);
    let trunc = SeriesTruncation {
        modes: m,
        tail_estimate: kernel_tail(&tm, m, t),
        target_tol: f64::INFINITY,
    };
    (out, trunc)
}

/// ψ_s^ν = Σ_m ν(φ_m) e^{−(λ_m−λ_0)s} φ_m/φ_0 on the grid.
pub fn psi_s_nu(
    basis: &SpectralBasis,
    nu: &ModeCoefficients,
    s: f64,
    tol: f64,
) -> Result<GridFunction> {
    if !(s >= 0.0) || (s == 0.0 && nu.kind == CoefficientKind::PointMass) {
        return Err(Error::InvalidArgument(format!(
            "ψ_s needs s > 0 (or s = 0 for densities), got {s}"
        )));
    }
    check_len(basis, nu)?;
    let m = basis.mode_count();
    let gaps = basis.gaps();
    let mut values = vec![0.0; basis.grid().len()];
    for k in 0..m {
        let f = nu.values[k] * (-gaps[k] * s).exp();
        for (v, g) in values.iter_mut().zip(basis.ground_ratio(k)) {
            *v += f * g;
        }
    }
    let tm = TailModel::new(basis);
    let env = nu.envelope;
    let tail = tail_sum(m, |k| env.at(k) * tm.ratio(k) * (-tm.gap(k) * s).exp());
    Ok(GridFunction {
        values,
        truncation: SeriesTruncation {
            modes: m,
            tail_estimate: tail,
            target_tol: tol,
        },
    })
}

/// Coefficients of ν_ε: ν_ε(φ_m) = e^{−λ_m ε} ν(φ_m)/ν(P_ε 1).
pub fn time_shift_coefficients(
    basis: &SpectralBasis,
    nu: &ModeCoefficients,
    eps: f64,
) -> Result<ModeCoefficients> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "shift must be positive, got {eps}"
        )));
    }
    check_len(basis, nu)?;
    let surv = survival_probability(basis, nu, eps);
    if !(surv > 0.0) {
        return Err(Error::NotAdmissible(format!(
            "ν(P_ε 1) = {surv:.3e} is not positive"
        )));
    }
    let values: Vec<f64> = basis
        .eigenvalues()
        .iter()
        .zip(&nu.values)
        .map(|(l, v)| (-l * eps).exp() * v / surv)
        .collect();
    let l2 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(ModeCoefficients {
        values,
        source: format!("{} shifted by {eps}", nu.source),
        kind: CoefficientKind::Density,
        envelope: Envelope {
            scale: l2,
            power: 0.0,
        },
    })
}

/// ν_ε as a density against μ on the basis grid: h_ε = ψ_ε^ν φ_0/μ(ψ_ε^ν φ_0).
pub fn time_shift(
    basis: &SpectralBasis,
    nu: &InitialDistribution,
    eps: f64,
) -> Result<InitialDistribution> {
    let c = project(nu, basis)?;
    let psi = psi_s_nu(basis, &c, eps, f64::INFINITY)?;
    let phi0 = basis.eigenfunction(0);
    let mut h: Vec<f64> = psi.values.iter().zip(phi0).map(|(a, b)| a * b).collect();
    let mass = basis.grid().integrate(&h);
    h.iter_mut().for_each(|v| *v /= mass);
    Ok(InitialDistribution::Density {
        grid: basis.grid().clone(),
        h,
    })
}

/// Shift used for point masses: ε = t^{−2}, capped at t/2 for t < √2·2^{1/3}.
pub fn point_mass_shift(t: f64) -> f64 {
    (t.powi(-2)).min(0.5 * t)
}

#[derive(Debug, Clone)]
enum DensityKernel {
    /// Lebesgue density ρ_V(x)·Σ K_mn φ_m(x)φ_n(x).
    Pair { k: Vec<f64> },
    /// Lebesgue density ρ_V(x)·Σ c_m φ_m(x).
    Linear { c: Vec<f64> },
}

/// Density of μ_t^ν against μ_0 (Dirichlet), or of the mean empirical
/// measure against μ (Neumann).
#[derive(Debug, Clone)]
pub struct ConditionalDensity {
    pub t: f64,
    /// Time actually fed to the series (t − ε for shifted point masses).
    pub t_effective: f64,
    pub time_shift: Option<f64>,
    /// h at the grid nodes.
    pub values: Vec<f64>,
    /// ρ = h − 1 at the grid nodes, evaluated without cancellation.
    pub rho: Vec<f64>,
    /// ν(φ_0 P_t^0 φ_0^{-1}) for the coefficients in use.
    pub normalization: f64,
    pub truncation: SeriesTruncation,
    pub min_value: f64,
    pub nonnegative: bool,
    pub nu_coeffs: ModeCoefficients,
    pub mu_coeffs: ModeCoefficients,
    grid: Arc<QuadratureGrid>,
    kernel: DensityKernel,
}

impl ConditionalDensity {
    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    /// Lebesgue density of the measure at `p`.
    pub fn lebesgue_density(&self, basis: &SpectralBasis, p: &[f64]) -> f64 {
        let m = basis.mode_count();
        let mut phi = vec![0.0; m];
        basis.eval(p, &mut phi);
        self.lebesgue_from_modes(basis, p, &phi)
    }

    fn lebesgue_from_modes(&self, basis: &SpectralBasis, p: &[f64], phi: &[f64]) -> f64 {
        let m = phi.len();
        let core = match &self.kernel {
            DensityKernel::Pair { k } => {
                let mut s = 0.0;
                for i in 0..m {
                    let row = &k[i * m..(i + 1) * m];
                    let inner: f64 = row.iter().zip(phi).map(|(a, b)| a * b).sum();
                    s += phi[i] * inner;
                }
                s
            }
            DensityKernel::Linear { c } => c.iter().zip(phi).map(|(a, b)| a * b).sum(),
        };
        basis.reference_density_at(p) * core
    }

    /// Density against μ_0 (Dirichlet) or μ (Neumann) at the grid nodes.
    pub fn h(&self) -> &[f64] {
        &self.values
    }

    /// ∫ h dμ_0 by grid quadrature.
    pub fn mass(&self, basis: &SpectralBasis) -> f64 {
        let w = basis.grid().weights();
        let phi0 = basis.eigenfunction(0);
        self.values
            .iter()
            .zip(w)
            .zip(phi0)
            .map(|((h, w), f)| h * w * f * f)
            .sum()
    }

    /// CSV snapshot: columns x, h_t, reference density of μ_0.
    pub fn to_csv(&self, basis: &SpectralBasis) -> String {
        let mut s = String::new();
        s.push_str(&format!("# t = {:.17e}\n", self.t));
        s.push_str(&format!("# modes = {}\n", self.truncation.modes));
        s.push_str(&format!(
            "# tail_estimate = {:.17e}\n",
            self.truncation.tail_estimate
        ));
        if let Some(e) = self.time_shift {
            s.push_str(&format!("# time_shift = {e:.17e}\n"));
        }
        s.push_str("x,h_t,mu0_density\n");
        let g = basis.grid();
        let phi0 = basis.eigenfunction(0);
        for i in 0..g.len() {
            let x = g.point(i);
            let ref0 = phi0[i] * phi0[i] * g.reference_density()[i];
            let coords: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&format!(
                "{},{:.17e},{:.17e}\n",
                coords.join(";"),
                self.values[i],
                ref0
            ));
        }
        s
    }
}

/// Pair kernel K_mn = ν_m μ_n J_mn/(t N) and ρ on the grid using modes < `m`.
fn pair_rho(
    basis: &SpectralBasis,
    nu: &[f64],
    mu: &[f64],
    t: f64,
    m: usize,
) -> (Vec<f64>, Vec<f64>, f64) {
    let gaps = basis.gaps();
    let n = basis.grid().len();
    let norm: f64 = (0..m).map(|k| nu[k] * mu[k] * (-gaps[k] * t).exp()).sum();
    let scale = 1.0 / (t * norm);
    let mut k = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            k[i * m + j] = nu[i] * mu[j] * time_integral(gaps[i], gaps[j], t) * scale;
        }
    }
    let mut kp = nalgebra::DMatrix::from_row_slice(m, m, &k);
    kp[(0, 0)] = 0.0;
    let mut g = nalgebra::DMatrix::<f64>::zeros(m, n);
    for r in 0..m {
        for (i, v) in basis.ground_ratio(r).iter().enumerate() {
            g[(r, i)] = *v;
        }
    }
    let tg = &kp * &g;
    let shift: f64 = (1..m)
        .map(|r| nu[r] * mu[r] * (-gaps[r] * t).exp())
        .sum::<f64>()
        / norm;
    let rho: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for r in 0..m {
                s += g[(r, i)] * tg[(r, i)];
            }
            s - shift
        })
        .collect();
    (k, rho, norm)
}

/// h_t^ν = 1 + ρ_t^ν on the grid by the closed-form double eigenseries.
///
/// Point masses are replaced by ν_ε with ε = [`point_mass_shift`]`(t)` and
/// evaluated at time t − ε. The tail estimate is the grid sup of the change
/// in ρ when the upper half of the modes is dropped. On a Neumann basis this
/// returns the mean empirical density.
pub fn conditional_density(
    basis: &SpectralBasis,
    nu: &InitialDistribution,
    t: f64,
    tol: f64,
) -> Result<ConditionalDensity> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time must be positive, got {t}"
        )));
    }
    if basis.boundary() == Boundary::Neumann {
        return mean_empirical_density(basis, nu, t, tol);
    }
    let raw = project(nu, basis)?;
    let (coeffs, t_eff, shift) = match raw.kind {
        CoefficientKind::PointMass => {
            let eps = point_mass_shift(t);
            (
                time_shift_coefficients(basis, &raw, eps)?,
                t - eps,
                Some(eps),
            )
        }
        _ => (raw, t, None),
    };
    if !(coeffs.values[0] > 0.0) {
        return Err(Error::NotAdmissible(format!(
            "ν(φ_0) = {:.3e} is not positive",
            coeffs.values[0]
        )));
    }
    let mu = ModeCoefficients::reference(basis);
    let m = basis.mode_count();
    let (k, rho, norm) = pair_rho(basis, &coeffs.values, &mu.values, t_eff, m);
    let tail = if m >= 2 {
        let (_, rho_half, _) = pair_rho(basis, &coeffs.values, &mu.values, t_eff, m / 2);
        rho.iter()
            .zip(&rho_half)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    finish(
        basis,
        t,
        t_eff,
        shift,
        rho,
        norm,
        tail,
        tol,
        coeffs,
        mu,
        DensityKernel::Pair { k },
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    basis: &SpectralBasis,
    t: f64,
    t_eff: f64,
    shift: Option<f64>,
    rho: Vec<f64>,
    norm: f64,
    tail: f64,
    tol: f64,
    nu: ModeCoefficients,
    mu: ModeCoefficients,
    kernel: DensityKernel,
) -> Result<ConditionalDensity> {
    let m = basis.mode_count();
    if tail > tol {
        return Err(Error::Truncation {
            tail,
            tol,
            required_modes: 2 * m,
        });
    }
    let values: Vec<f64> = rho.iter().map(|r| 1.0 + r).collect();
    let min_value = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ConditionalDensity {
        t,
        t_effective: t_eff,
        time_shift: shift,
        nonnegative: min_value >= -1e-6,
        min_value,
        values,
        rho,
        normalization: norm,
        truncation: SeriesTruncation {
            modes: m,
            tail_estimate: tail,
            target_tol: tol,
        },
        nu_coeffs: nu,
        mu_coeffs: mu,
        grid: basis.grid().clone(),
        kernel,
    })
}

/// Density of the mean empirical measure E^ν[(1/t)∫_0^t δ_{X_s} ds] of the
/// reflecting diffusion against μ: 1 + Σ_{m≥1} ν(φ_m)(1 − e^{−λ_m t})/(λ_m t) φ_m.
pub fn mean_empirical_density(
    basis: &SpectralBasis,
    nu: &InitialDistribution,
    t: f64,
    tol: f64,
) -> Result<ConditionalDensity> {
    if basis.boundary() != Boundary::Neumann {
        return Err(Error::Unsupported(
            "mean empirical densities need a Neumann basis".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time must be positive, got {t}"
        )));
    }
    let nu_c = project(nu, basis)?;
    let m = basis.mode_count();
    let lam = basis.eigenvalues();
    let mut c = vec![0.0; m];
    c[0] = 1.0;
    for k in 1..m {
        c[k] = nu_c.values[k] * (-(-lam[k] * t).exp_m1()) / (lam[k] * t);
    }
    let n = basis.grid().len();
    let eval = |upto: usize| -> Vec<f64> {
        let mut r = vec![0.0; n];
        for k in 1..upto {
            for (v, p) in r.iter_mut().zip(basis.eigenfunction(k)) {
                *v += c[k] * p;
            }
        }
        r
    };
    let rho = eval(m);
    let tail = if m >= 2 {
        let half = eval(m / 2);
        rho.iter()
            .zip(&half)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let mu = ModeCoefficients::reference(basis);
    finish(
        basis,
        t,
        t,
        None,
        rho,
        1.0,
        tail,
        tol,
        nu_c,
        mu,
        DensityKernel::Linear { c },
    )
}

/// ρ̃_t^ν = (t N)^{-1} Σ_{m≥1} (μ(φ_0)ν(φ_m) + ν(φ_0)μ(φ_m))/(λ_m − λ_0) · φ_m/φ_0.
pub fn rho_tilde(
    basis: &SpectralBasis,
    nu: &ModeCoefficients,
    mu: &ModeCoefficients,
    t: f64,
    normalization: f64,
) -> Result<GridFunction> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time must be positive, got {t}"
        )));
    }
    check_len(basis, nu)?;
    check_len(basis, mu)?;
    let c = rho_tilde_coefficients(basis, nu, mu, t, normalization);
    let n = basis.grid().len();
    let m = basis.mode_count();
    let eval = |upto: usize| -> Vec<f64> {
        let mut r = vec![0.0; n];
        for k in 1..upto {
            for (v, g) in r.iter_mut().zip(basis.ground_ratio(k)) {
                *v += c[k] * g;
            }
        }
        r
    };
    let values = eval(m);
    let tail = if m >= 2 {
        let half = eval(m / 2);
        values
            .iter()
            .zip(&half)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(GridFunction {
        values,
        truncation: SeriesTruncation {
            modes: m,
            tail_estimate: tail,
            target_tol: f64::INFINITY,
        },
    })
}

/// Coefficients of ρ̃ in the ground basis {φ_m/φ_0}.
pub fn rho_tilde_coefficients(
    basis: &SpectralBasis,
    nu: &ModeCoefficients,
    mu: &ModeCoefficients,
    t: f64,
    normalization: f64,
) -> Vec<f64> {
    let gaps = basis.gaps();
    let scale = 1.0 / (t * normalization);
    let (n0, m0) = (nu.values[0], mu.values[0]);
    (0..basis.mode_count())
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                scale * (m0 * nu.values[k] + n0 * mu.values[k]) / gaps[k]
            }
        })
        .collect()
}

/// Smallest time in `times` (ascending) from which h_t^ν ≥ −1e-6 on the grid
/// for every later listed time.
pub fn empirical_t_min(
    basis: &SpectralBasis,
    nu: &InitialDistribution,
    times: &[f64],
) -> Result<Option<f64>> {
    let mut first_ok = None;
    for &t in times {
        let h = conditional_density(basis, nu, t, f64::INFINITY)?;
        if h.nonnegative {
            first_ok.get_or_insert(t);
        } else {
            first_ok = None;
        }
    }
    Ok(first_ok)
}
