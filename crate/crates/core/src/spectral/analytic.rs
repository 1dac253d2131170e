//! Closed-form sine/cosine bases on intervals and rectangles (V ≡ 0).

use std::f64::consts::{PI, SQRT_2};

use super::{Expansion, QuadratureGrid, SpectralBasis};
use crate::domain::{Boundary, Domain, Shape};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;

/// Gauss nodes used by default for an interval basis with `m` modes: enough
/// to integrate products of the two highest modes to round-off.
pub fn default_grid_size(m: usize) -> usize {
    let resolved = (0.5 * PI * m as f64).ceil() as usize + 64;
    resolved.max(400)
}

fn default_axis_size(max_index: usize) -> usize {
    ((0.5 * PI * (max_index + 1) as f64).ceil() as usize + 32).max(48)
}

/// Builds the closed-form basis on an interval or rectangle with the default
/// grid size.
pub fn build_analytic_basis(domain: &Domain, m: usize) -> Result<SpectralBasis> {
    build_analytic_basis_with_grid(domain, m, None)
}

/// As [`build_analytic_basis`], with an explicit number of Gauss nodes per
/// axis.
pub fn build_analytic_basis_with_grid(
    domain: &Domain,
    m: usize,
    nodes_per_axis: Option<usize>,
) -> Result<SpectralBasis> {
    if m < 1 {
        return Err(Error::InvalidArgument(
            "mode count must be at least 1".into(),
        ));
    }
    domain.validate()?;
    if !domain.potential.is_zero() {
        return Err(Error::Unsupported(
            "closed-form bases require a zero potential".into(),
        ));
    }
    let bnd = domain.boundary;
    match domain.shape {
        Shape::Interval { bounds: [a, b] } => {
            let len = b - a;
            let n = nodes_per_axis.unwrap_or_else(|| default_grid_size(m));
            let (x, w) = gauss_legendre_on(n, a, b);
            let weights = w.iter().map(|v| v / len).collect();
            let grid = QuadratureGrid::new(1, x, weights, vec![1.0 / len; n]);
            let eig = (0..m).map(|k| trig_eigenvalue(bnd, len, k)).collect();
            SpectralBasis::assemble(domain.clone(), eig, grid, len, Expansion::Trig, None)
        }
        Shape::Rectangle { x: xs, y: ys } => {
            let (lx, ly) = (xs[1] - xs[0], ys[1] - ys[0]);
            let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    let l = trig_eigenvalue(bnd, lx, i) + trig_eigenvalue(bnd, ly, j);
                    cand.push((l, i, j));
                }
            }
            cand.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
            cand.truncate(m);
            let index: Vec<(usize, usize)> = cand.iter().map(|c| (c.1, c.2)).collect();
            let eig: Vec<f64> = cand.iter().map(|c| c.0).collect();
            let imax = index.iter().map(|p| p.0).max().unwrap();
            let jmax = index.iter().map(|p| p.1).max().unwrap();
            let nx = nodes_per_axis.unwrap_or_else(|| default_axis_size(imax));
            let ny = nodes_per_axis.unwrap_or_else(|| default_axis_size(jmax));
            let (gx, wx) = gauss_legendre_on(nx, xs[0], xs[1]);
            let (gy, wy) = gauss_legendre_on(ny, ys[0], ys[1]);
            let area = lx * ly;
            let mut pts = Vec::with_capacity(2 * nx * ny);
            let mut weights = Vec::with_capacity(nx * ny);
            for i in 0..nx {
                for j in 0..ny {
                    pts.push(gx[i]);
                    pts.push(gy[j]);
                    weights.push(wx[i] * wy[j] / area);
                }
            }
            let grid = QuadratureGrid::new(2, pts, weights, vec![1.0 / area; nx * ny]);
            SpectralBasis::assemble(
                domain.clone(),
                eig,
                grid,
                area,
                Expansion::Tensor { index },
                None,
            )
        }
    }
}

fn frequency(bnd: Boundary, k: usize) -> f64 {
    match bnd {
        Boundary::Dirichlet => (k + 1) as f64,
        Boundary::Neumann => k as f64,
    }
}

pub(crate) fn trig_eigenvalue(bnd: Boundary, len: f64, k: usize) -> f64 {
    (frequency(bnd, k) * PI / len).powi(2)
}

pub(crate) fn trig_mode(bnd: Boundary, a: f64, b: f64, k: usize, x: f64) -> f64 {
    let th = PI * (x - a) / (b - a);
    match bnd {
        Boundary::Dirichlet => SQRT_2 * ((k + 1) as f64 * th).sin(),
        Boundary::Neumann if k == 0 => 1.0,
        Boundary::Neumann => SQRT_2 * (k as f64 * th).cos(),
    }
}

pub(crate) fn trig_mode_derivative(bnd: Boundary, a: f64, b: f64, k: usize, x: f64) -> f64 {
    let s = PI / (b - a);
    let th = s * (x - a);
    let f = frequency(bnd, k);
    match bnd {
        Boundary::Dirichlet => SQRT_2 * f * s * (f * th).cos(),
        Boundary::Neumann if k == 0 => 0.0,
        Boundary::Neumann => -SQRT_2 * f * s * (f * th).sin(),
    }
}

pub(crate) fn trig_modes(
    bnd: Boundary,
    a: f64,
    b: f64,
    x: f64,
    out: &mut [f64],
    grad: Option<&mut [f64]>,
) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = trig_mode(bnd, a, b, k, x);
    }
    if let Some(g) = grad {
        for (k, o) in g.iter_mut().take(out.len()).enumerate() {
            *o = trig_mode_derivative(bnd, a, b, k, x);
        }
    }
}

pub(crate) fn tensor_modes(
    bnd: Boundary,
    axes: &[(f64, f64)],
    index: &[(usize, usize)],
    p: &[f64],
    out: &mut [f64],
    grad: Option<&mut [f64]>,
) {
    let (ax, ay) = (axes[0], axes[1]);
    match grad {
        None => {
            for (o, &(i, j)) in out.iter_mut().zip(index) {
                *o = trig_mode(bnd, ax.0, ax.1, i, p[0]) * trig_mode(bnd, ay.0, ay.1, j, p[1]);
            }
        }
        Some(g) => {
            for (k, &(i, j)) in index.iter().enumerate() {
                let fx = trig_mode(bnd, ax.0, ax.1, i, p[0]);
                let fy = trig_mode(bnd, ay.0, ay.1, j, p[1]);
                out[k] = fx * fy;
                g[2 * k] = trig_mode_derivative(bnd, ax.0, ax.1, i, p[0]) * fy;
                g[2 * k + 1] = fx * trig_mode_derivative(bnd, ay.0, ay.1, j, p[1]);
            }
        }
    }
}

/// φ_k/φ_0 = sin((k+1)θ)/sin θ and its x-derivative for the Dirichlet sine
/// basis. Near the endpoints the Chebyshev U recurrence avoids 0/0.
pub(crate) fn sine_ratio_modes(a: f64, b: f64, x: f64, out: &mut [f64], grad: &mut [f64]) {
    let s = PI / (b - a);
    let th = s * (x - a);
    let (sn, cs) = th.sin_cos();
    let m = out.len();
    if sn.abs() >= 1e-2 {
        for k in 0..m {
            let f = (k + 1) as f64;
            let (sk, ck) = (f * th).sin_cos();
            out[k] = sk / sn;
            grad[k] = s * (f * ck * sn - sk * cs) / (sn * sn);
        }
        return;
    }
    let (mut u_prev, mut u) = (0.0, 1.0);
    let (mut du_prev, mut du) = (0.0, 0.0);
    for k in 0..m {
        out[k] = u;
        grad[k] = -s * sn * du;
        let u_next = 2.0 * cs * u - u_prev;
        let du_next = 2.0 * u + 2.0 * cs * du - du_prev;
        u_prev = u;
        u = u_next;
        du_prev = du;
        du = du_next;
    }
}

pub(crate) fn trig_sup(bnd: Boundary, k: usize) -> f64 {
    match (bnd, k) {
        (Boundary::Neumann, 0) => 1.0,
        _ => SQRT_2,
    }
}

pub(crate) fn trig_ratio_sup(bnd: Boundary, k: usize) -> f64 {
    match bnd {
        Boundary::Dirichlet => (k + 1) as f64,
        Boundary::Neumann => trig_sup(bnd, k),
    }
}
