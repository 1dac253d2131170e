//! Legendre–Galerkin solver for −(e^V f′)′ = λ e^V f on an interval.
//!
//! Dirichlet trial space: ψ_k = (L_k − L_{k+2})/√(4k+6), which vanish at both
//! ends. Neumann trial space: normalized Legendre polynomials (the boundary
//! condition is natural). Both matrices are assembled with the same Gauss
//! rule that later carries μ, so the discrete modes are exactly orthonormal
//! on the grid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{Expansion, QuadratureGrid, SpectralBasis};
use crate::domain::{Boundary, Domain};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Solves the Sturm–Liouville problem for the lowest `m` modes using
/// `n_grid` Gauss nodes (which also form the basis grid).
pub fn solve_sturm_liouville(domain: &Domain, m: usize, n_grid: usize) -> Result<SpectralBasis> {
    domain.validate()?;
    let (a, b) = domain.interval_bounds().ok_or_else(|| {
        Error::Unsupported("the Sturm–Liouville solver handles intervals only".into())
    })?;
    if m < 1 {
        return Err(Error::InvalidArgument(
            "mode count must be at least 1".into(),
        ));
    }
    if n_grid < 8 * m {
        return Err(Error::InvalidArgument(format!(
            "n_grid = {n_grid} is below 8·M = {}",
            8 * m
        )));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let (s, w) = gauss_legendre(n_grid);
    let x: Vec<f64> = s.iter().map(|&v| mid + half * v).collect();
    let rho: Vec<f64> = x.iter().map(|&v| domain.potential.value(v).exp()).collect();
    let z: f64 = w.iter().zip(&rho).map(|(wi, r)| wi * half * r).sum();

    let cap = n_grid / 2 - 2;
    let order = ((0.5 * PI * m as f64).ceil() as usize + 40)
        .min(cap)
        .max(m + 2);
    let table = LegendreTable::new(&s, order + 2);

    let (vals, lambdas) = solve_with(domain.boundary, order, m, &table, &w, &rho, half, z)?;
    let reduced = order.saturating_sub((order / 8).max(8)).max(m + 1);
    if reduced < order {
        let (_, check) = solve_with(domain.boundary, reduced, m, &table, &w, &rho, half, z)?;
        for k in 0..m {
            let scale = lambdas[k].abs().max(1.0);
            let diff = (check[k] - lambdas[k]).abs() / scale;
            if diff > 1e-7 {
                return Err(Error::EigenNonConvergence(format!(
                    "mode {k} moved by {diff:.2e} (relative) when the trial space was reduced"
                )));
            }
        }
    }
    for k in 1..m {
        if lambdas[k] - lambdas[k - 1] <= 1e-9 * lambdas[k].abs().max(1.0) {
            return Err(Error::EigenvalueCrossing(k - 1, k));
        }
    }

    let coeff_order = vals.len() / m;
    let weights: Vec<f64> = w
        .iter()
        .zip(&rho)
        .map(|(wi, r)| wi * half * r / z)
        .collect();
    let density: Vec<f64> = rho.iter().map(|r| r / z).collect();
    let grid = QuadratureGrid::new(1, x, weights, density);
    SpectralBasis::assemble(
        domain.clone(),
        lambdas,
        grid,
        z,
        Expansion::Legendre {
            order: coeff_order,
            coeffs: vals,
        },
        None,
    )
}

struct LegendreTable {
    n: usize,
    order: usize,
    p: Vec<f64>,
    dp: Vec<f64>,
}

impl LegendreTable {
    fn new(s: &[f64], order: usize) -> Self {
        let n = s.len();
        let mut p = vec![0.0; n * order];
        let mut dp = vec![0.0; n * order];
        for (q, &x) in s.iter().enumerate() {
            let row = &mut p[q * order..(q + 1) * order];
            let drow = &mut dp[q * order..(q + 1) * order];
            legendre_row(x, row, drow);
        }
        Self { n, order, p, dp }
    }
}

/// P_k(x) and P_k′(x) for k < out.len().
fn legendre_row(x: f64, p: &mut [f64], dp: &mut [f64]) {
    let k_max = p.len();
    if k_max == 0 {
        return;
    }
    p[0] = 1.0;
    dp[0] = 0.0;
    if k_max == 1 {
        return;
    }
    p[1] = x;
    dp[1] = 1.0;
    for k in 1..k_max - 1 {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
}

/// Returns Legendre coefficients (row-major, m × order′) and eigenvalues.
#[allow(clippy::too_many_arguments)]
fn solve_with(
    bnd: Boundary,
    order: usize,
    m: usize,
    t: &LegendreTable,
    w: &[f64],
    rho: &[f64],
    half: f64,
    z: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = t.n;
    // Trial functions and derivatives (in s) at the nodes.
    let mut psi = DMatrix::<f64>::zeros(n, order);
    let mut dpsi = DMatrix::<f64>::zeros(n, order);
    for q in 0..n {
        let p = &t.p[q * t.order..(q + 1) * t.order];
        let dp = &t.dp[q * t.order..(q + 1) * t.order];
        for k in 0..order {
            let (v, d) = match bnd {
                Boundary::Dirichlet => {
                    let c = 1.0 / (4.0 * k as f64 + 6.0).sqrt();
                    (c * (p[k] - p[k + 2]), c * (dp[k] - dp[k + 2]))
                }
                Boundary::Neumann => {
                    let c = ((2.0 * k as f64 + 1.0) / 2.0).sqrt();
                    (c * p[k], c * dp[k])
                }
            };
            let sw_mass = (w[q] * rho[q] * half).sqrt();
            let sw_stiff = (w[q] * rho[q] / half).sqrt();
            psi[(q, k)] = v * sw_mass;
            dpsi[(q, k)] = d * sw_stiff;
        }
    }
    let stiff = dpsi.transpose() * &dpsi;
    let mass = psi.transpose() * &psi;
    let chol = mass
        .cholesky()
        .ok_or_else(|| Error::EigenNonConvergence("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigenNonConvergence("singular Cholesky factor".into()))?;
    let mut c = &linv * stiff * linv.transpose();
    c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::try_new(c, 1e-15, 10_000)
        .ok_or_else(|| Error::EigenNonConvergence("symmetric eigen-iteration stalled".into()))?;
    let mut idx: Vec<usize> = (0..order).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    if order < m {
        return Err(Error::EigenNonConvergence(
            "trial space smaller than M".into(),
        ));
    }

    let out_order = match bnd {
        Boundary::Dirichlet => order + 2,
        Boundary::Neumann => order,
    };
    let mut coeffs = vec![0.0; m * out_order];
    let mut lambdas = Vec::with_capacity(m);
    let linv_t = linv.transpose();
    for (j, &i) in idx.iter().take(m).enumerate() {
        lambdas.push(eig.eigenvalues[i]);
        let u = &linv_t * eig.eigenvectors.column(i);
        let row = &mut coeffs[j * out_order..(j + 1) * out_order];
        let scale = z.sqrt();
        for k in 0..order {
            match bnd {
                Boundary::Dirichlet => {
                    let c = scale * u[k] / (4.0 * k as f64 + 6.0).sqrt();
                    row[k] += c;
                    row[k + 2] -= c;
                }
                Boundary::Neumann => {
                    row[k] = scale * u[k] * ((2.0 * k as f64 + 1.0) / 2.0).sqrt();
                }
            }
        }
        // Sign: positive slope (Dirichlet) or value (Neumann) at the left end.
        let lead: f64 = row
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                match bnd {
                    Boundary::Dirichlet => -sign * c * (k * (k + 1)) as f64 / 2.0,
                    Boundary::Neumann => sign * c,
                }
            })
            .sum();
        if lead < 0.0 {
            row.iter_mut().for_each(|c| *c = -*c);
        }
    }
    Ok((coeffs, lambdas))
}

/// Evaluates all modes (and optionally their x-derivatives) at `x`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn legendre_modes(
    a: f64,
    b: f64,
    order: usize,
    coeffs: &[f64],
    m: usize,
    x: f64,
    out: &mut [f64],
    grad: Option<&mut [f64]>,
) {
    let half = 0.5 * (b - a);
    let s = ((x - a) - (b - x)) / (b - a);
    let mut p = vec![0.0; order];
    let mut dp = vec![0.0; order];
    legendre_row(s, &mut p, &mut dp);
    for j in 0..m {
        let row = &coeffs[j * order..(j + 1) * order];
        out[j] = row.iter().zip(&p).map(|(c, v)| c * v).sum();
    }
    if let Some(g) = grad {
        for j in 0..m {
            let row = &coeffs[j * order..(j + 1) * order];
            g[j] = row.iter().zip(&dp).map(|(c, v)| c * v).sum::<f64>() / half;
        }
    }
}

/// Value and x-derivative of a single Legendre series at `x`.
pub(crate) fn legendre_mode(a: f64, b: f64, row: &[f64], x: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let s = ((x - a) - (b - x)) / (b - a);
    let mut p = vec![0.0; row.len()];
    let mut dp = vec![0.0; row.len()];
    legendre_row(s, &mut p, &mut dp);
    let v = row.iter().zip(&p).map(|(c, v)| c * v).sum();
    let d = row.iter().zip(&dp).map(|(c, v)| c * v).sum::<f64>() / half;
    (v, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_values_at_endpoints() {
        let mut p = vec![0.0; 12];
        let mut dp = vec![0.0; 12];
        legendre_row(-1.0, &mut p, &mut dp);
        for k in 0..12 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((p[k] - sign).abs() < 1e-14);
            let expect = -sign * (k * (k + 1)) as f64 / 2.0;
            assert!((dp[k] - expect).abs() < 1e-11);
        }
    }

    #[test]
    fn rejects_small_grid_and_rectangles() {
        let d = Domain::unit_interval(Boundary::Dirichlet);
        assert!(solve_sturm_liouville(&d, 10, 40).is_err());
        let r = Domain::rectangle([0.0, 1.0], [0.0, 1.0], Boundary::Dirichlet).unwrap();
        assert!(solve_sturm_liouville(&r, 2, 64).is_err());
    }
}
