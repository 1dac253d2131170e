//! The limit constant I of t²W2(μ_t^ν, μ_0)², its reflecting-boundary
//! analogue, and the finiteness classification.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::measure::{density_lp_norm, InitialDistribution, ModeCoefficients};
use crate::spectral::SpectralBasis;

/// Partial sums below this are treated as a vanishing constant.
pub const VANISHING_THRESHOLD: f64 = 1e-14;
/// Mode count after which a vanishing partial sum is reported.
pub const VANISHING_CHECK_MODES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Positivity {
    Positive,
    /// All summands vanish to round-off: the input is not an admissible
    /// probability measure (or, for reflecting boundaries, ν = μ).
    Vanishing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finiteness {
    /// d ≤ 6.
    LowDimension {
        dim: usize,
    },
    /// ν = hμ with ‖h‖_{L^p(μ)} finite, p = 2d/(d+6).
    DensityIntegrability {
        dim: usize,
        exponent: f64,
        norm: f64,
    },
    NotGuaranteed {
        dim: usize,
    },
}

impl Finiteness {
    pub fn is_guaranteed(&self) -> bool {
        !matches!(self, Finiteness::NotGuaranteed { .. })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitInputs {
    pub nu_coefficients: Vec<f64>,
    pub mu_coefficients: Option<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub dim: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitReport {
    pub boundary: &'static str,
    #[serde(rename = "I_value")]
    pub value: f64,
    /// partial_sums[k] = Σ_{m=1}^{k} summand_m; entry 0 is 0.
    pub partial_sums: Vec<f64>,
    pub tail_bound: f64,
    pub weyl_constant: f64,
    pub positivity: Positivity,
    pub finiteness: Option<Finiteness>,
    pub inputs: LimitInputs,
}

impl LimitReport {
    pub fn modes(&self) -> usize {
        self.partial_sums.len()
    }

    /// Partial sum over the first `m` modes.
    pub fn partial(&self, m: usize) -> f64 {
        self.partial_sums[m.clamp(1, self.modes()) - 1]
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("limit report serializes")
    }
}

/// 0.9·min_{M/2 ≤ m < M} (λ_m − λ_0)/m^{2/d}.
fn weyl_constant(eig: &[f64], dim: usize) -> f64 {
    let p = 2.0 / dim as f64;
    let m = eig.len();
    let c = ((m / 2).max(1)..m)
        .map(|k| (eig[k] - eig[0]) / (k as f64).powf(p))
        .fold(f64::INFINITY, f64::min);
    0.9 * c
}

/// Σ_{m ≥ start} m^{−e} ≤ start^{−e} + start^{1−e}/(e − 1), for e > 1.
fn power_tail(start: usize, e: f64) -> f64 {
    if e <= 1.0 {
        return f64::INFINITY;
    }
    let s = start.max(1) as f64;
    s.powf(-e) + s.powf(1.0 - e) / (e - 1.0)
}

fn check_inputs(nu: &ModeCoefficients, eig: &[f64], dim: usize) -> Result<()> {
    if eig.len() < 2 {
        return Err(Error::InvalidArgument("need at least two modes".into()));
    }
    if nu.len() != eig.len() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients for {} eigenvalues",
            nu.len(),
            eig.len()
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    Ok(())
}

fn cumulative(summands: impl Iterator<Item = f64>, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m);
    let mut acc = 0.0;
    out.push(0.0);
    for s in summands {
        acc += s;
        out.push(acc);
    }
    out
}

fn positivity(partial: &[f64]) -> Positivity {
    let k = partial.len().min(VANISHING_CHECK_MODES) - 1;
    if partial[k] < VANISHING_THRESHOLD && *partial.last().unwrap() < VANISHING_THRESHOLD {
        Positivity::Vanishing
    } else {
        Positivity::Positive
    }
}

/// I = {μ(φ_0)ν(φ_0)}^{-2} Σ_{m≥1} {ν(φ_0)μ(φ_m) + μ(φ_0)ν(φ_m)}²/(λ_m − λ_0)³.
///
/// The tail beyond the cutoff M uses |μ(φ_m)| ≤ 1, the envelope of ν's
/// coefficients and λ_m − λ_0 ≥ c·m^{2/d}.
#[allow(non_snake_case)]
pub fn compute_I(
    nu: &ModeCoefficients,
    mu: &ModeCoefficients,
    eigenvalues: &[f64],
    dim: usize,
    tol: f64,
) -> Result<LimitReport> {
    check_inputs(nu, eigenvalues, dim)?;
    if mu.len() != nu.len() {
        return Err(Error::InvalidArgument(
            "ν and μ coefficient counts differ".into(),
        ));
    }
    let l0 = eigenvalues[0];
    if l0.abs() < 1e-12 {
        return Err(Error::Unsupported(
            "compute_I needs a Dirichlet spectrum (λ_0 > 0); use compute_I_neumann".into(),
        ));
    }
    let (n0, m0) = (nu.values[0], mu.values[0]);
    if !(n0 > 0.0) {
        return Err(Error::NotAdmissible(format!(
            "ν(φ_0) = {n0:e} is not positive"
        )));
    }
    if !(m0 > 0.0) {
        return Err(Error::NotAdmissible(format!(
            "μ(φ_0) = {m0:e} is not positive"
        )));
    }
    let m = eigenvalues.len();
    let norm = (m0 * n0).powi(2);
    let summands = (1..m).map(|k| {
        let num = n0 * mu.values[k] + m0 * nu.values[k];
        num * num / (eigenvalues[k] - l0).powi(3) / norm
    });
    let partial = cumulative(summands, m);

    let c = weyl_constant(eigenvalues, dim);
    let d = dim as f64;
    let env = nu.envelope;
    let tail = 2.0 / (c.powi(3) * norm)
        * (n0 * n0 * power_tail(m, 6.0 / d)
            + m0 * m0 * env.scale * env.scale * power_tail(m, 6.0 / d - 2.0 * env.power));
    let value = *partial.last().unwrap();
    if !(tail <= tol) {
        return Err(Error::Truncation {
            tail,
            tol,
            required_modes: required(m, tol, |k| {
                2.0 / (c.powi(3) * norm)
                    * (n0 * n0 * power_tail(k, 6.0 / d)
                        + m0 * m0
                            * env.scale
                            * env.scale
                            * power_tail(k, 6.0 / d - 2.0 * env.power))
            }),
        });
    }
    Ok(LimitReport {
        boundary: "dirichlet",
        value,
        positivity: positivity(&partial),
        partial_sums: partial,
        tail_bound: tail,
        weyl_constant: c,
        finiteness: None,
        inputs: LimitInputs {
            nu_coefficients: nu.values.clone(),
            mu_coefficients: Some(mu.values.clone()),
            eigenvalues: eigenvalues.to_vec(),
            dim,
            tol,
        },
    })
}

/// Σ_{m≥1} ν(φ_m)²/λ_m³ for a reflecting boundary (λ_0 = 0, φ_0 ≡ 1).
#[allow(non_snake_case)]
pub fn compute_I_neumann(
    nu: &ModeCoefficients,
    eigenvalues: &[f64],
    dim: usize,
    tol: f64,
) -> Result<LimitReport> {
    check_inputs(nu, eigenvalues, dim)?;
    if eigenvalues[0].abs() > 1e-9 || eigenvalues[1] <= 0.0 {
        return Err(Error::Unsupported(
            "compute_I_neumann needs a Neumann spectrum (λ_0 = 0 < λ_1)".into(),
        ));
    }
    let m = eigenvalues.len();
    let summands = (1..m).map(|k| nu.values[k].powi(2) / eigenvalues[k].powi(3));
    let partial = cumulative(summands, m);
    let c = weyl_constant(eigenvalues, dim);
    let env = nu.envelope;
    let bound = |k: usize| {
        let e = 6.0 / dim as f64 - 2.0 * env.power;
        // (m+1)^{2p} ≤ 2^{2p} m^{2p} for m ≥ 1.
        env.scale.powi(2) * 4f64.powf(env.power) / c.powi(3) * power_tail(k, e)
    };
    let tail = bound(m);
    if !(tail <= tol) {
        return Err(Error::Truncation {
            tail,
            tol,
            required_modes: required(m, tol, bound),
        });
    }
    Ok(LimitReport {
        boundary: "neumann",
        value: *partial.last().unwrap(),
        positivity: positivity(&partial),
        partial_sums: partial,
        tail_bound: tail,
        weyl_constant: c,
        finiteness: None,
        inputs: LimitInputs {
            nu_coefficients: nu.values.clone(),
            mu_coefficients: None,
            eigenvalues: eigenvalues.to_vec(),
            dim,
            tol,
        },
    })
}

fn required(current: usize, tol: f64, tail: impl Fn(usize) -> f64) -> usize {
    let mut k = current.max(1);
    while k < 1 << 30 && !(tail(k) <= tol) {
        k *= 2;
    }
    k
}

/// Whether I < ∞ is guaranteed: always for d ≤ 6, otherwise when ν has a
/// density in L^{2d/(d+6)}(μ) (norm evaluated on the basis grid).
pub fn finiteness_predicate(
    dim: usize,
    nu: &InitialDistribution,
    basis: &SpectralBasis,
) -> Result<Finiteness> {
    if dim <= 6 {
        return Ok(Finiteness::LowDimension { dim });
    }
    let p = 2.0 * dim as f64 / (dim as f64 + 6.0);
    Ok(match density_lp_norm(nu, basis, p)? {
        Some(norm) if norm.is_finite() => Finiteness::DensityIntegrability {
            dim,
            exponent: p,
            norm,
        },
        _ => Finiteness::NotGuaranteed { dim },
    })
}

/// Convenience wrapper: projects ν and μ on the basis and dispatches on the
/// boundary condition, attaching the finiteness classification.
pub fn limit_for(basis: &SpectralBasis, nu: &InitialDistribution, tol: f64) -> Result<LimitReport> {
    let nc = crate::measure::project(nu, basis)?;
    let mut rep = match basis.boundary() {
        crate::domain::Boundary::Dirichlet => compute_I(
            &nc,
            &ModeCoefficients::reference(basis),
            basis.eigenvalues(),
            basis.dim(),
            tol,
        )?,
        crate::domain::Boundary::Neumann => {
            compute_I_neumann(&nc, basis.eigenvalues(), basis.dim(), tol)?
        }
    };
    rep.finiteness = Some(finiteness_predicate(basis.dim(), nu, basis)?);
    Ok(rep)
}
