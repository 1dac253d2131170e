//! Eigenbasis {φ_m, λ_m} of −L on model domains, with quadrature for μ.
//!
//! Eigenfunctions are normalized in L²(μ) where μ(dx) = e^V dx / Z is a
//! probability measure. Dirichlet ground states are positive; higher modes
//! start with a positive lobe at the left boundary.

mod analytic;
mod galerkin;
mod io;

use std::sync::Arc;

pub use analytic::{build_analytic_basis, build_analytic_basis_with_grid, default_grid_size};
pub use galerkin::solve_sturm_liouville;
pub use io::{export_basis, import_basis, BASIS_FORMAT_VERSION};

use crate::domain::{Boundary, Domain};
use crate::error::{Error, Result};

/// Quadrature nodes strictly inside the domain with weights for μ.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    reference_density: Vec<f64>,
}

impl QuadratureGrid {
    pub(crate) fn new(
        dim: usize,
        points: Vec<f64>,
        weights: Vec<f64>,
        reference_density: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(points.len(), dim * weights.len());
        Self {
            dim,
            points,
            weights,
            reference_density,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Flattened node coordinates (row-major, `dim` per node).
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Quadrature weights representing μ (they sum to one).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Lebesgue density e^V/Z of μ at the nodes.
    pub fn reference_density(&self) -> &[f64] {
        &self.reference_density
    }

    /// ∫ f dμ for nodal values `f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn same_nodes(&self, other: &QuadratureGrid) -> bool {
        std::ptr::eq(self, other) || (self.dim == other.dim && self.points == other.points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Expansion {
    /// Closed-form sine/cosine modes on an interval.
    Trig,
    /// Tensor products of 1D trig modes on a rectangle.
    Tensor { index: Vec<(usize, usize)> },
    /// Legendre series on the interval, `order` coefficients per mode.
    Legendre { order: usize, coeffs: Vec<f64> },
}

/// Lowest M eigenpairs of −L with samples on a quadrature grid.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    domain: Domain,
    eigenvalues: Vec<f64>,
    grid: Arc<QuadratureGrid>,
    values: Vec<f64>,
    ratio: Option<Vec<f64>>,
    sup_norms: Vec<f64>,
    ratio_sups: Vec<f64>,
    normalizer: f64,
    expansion: Expansion,
}

impl SpectralBasis {
    /// Samples the expansion on the grid, fixes derived tables and validates.
    pub(crate) fn assemble(
        domain: Domain,
        eigenvalues: Vec<f64>,
        grid: QuadratureGrid,
        normalizer: f64,
        expansion: Expansion,
        values: Option<Vec<f64>>,
    ) -> Result<Self> {
        let m = eigenvalues.len();
        let n = grid.len();
        let mut basis = SpectralBasis {
            domain,
            eigenvalues,
            grid: Arc::new(grid),
            values: Vec::new(),
            ratio: None,
            sup_norms: Vec::new(),
            ratio_sups: Vec::new(),
            normalizer,
            expansion,
        };
        basis.values = match values {
            Some(v) => {
                if v.len() != m * n {
                    return Err(Error::InvalidArgument(format!(
                        "eigenfunction matrix has {} entries, expected {}",
                        v.len(),
                        m * n
                    )));
                }
                v
            }
            None => {
                let mut v = vec![0.0; m * n];
                let mut buf = vec![0.0; m];
                for i in 0..n {
                    basis.eval(basis.grid.point(i), &mut buf);
                    for (k, b) in buf.iter().enumerate() {
                        v[k * n + i] = *b;
                    }
                }
                v
            }
        };
        if basis.domain.boundary == Boundary::Dirichlet {
            let phi0 = &basis.values[..n];
            if let Some(i) = phi0.iter().position(|&v| v <= 0.0) {
                return Err(Error::EigenNonConvergence(format!(
                    "ground state not positive at node {i}"
                )));
            }
            let mut r = vec![0.0; m * n];
            for k in 0..m {
                for i in 0..n {
                    r[k * n + i] = basis.values[k * n + i] / phi0[i];
                }
            }
            basis.ratio = Some(r);
        }
        basis.compute_sup_norms();
        let res = basis.sampled_orthonormality_residual();
        if !(res <= 1e-8) {
            return Err(Error::Orthonormality(res));
        }
        Ok(basis)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn boundary(&self) -> Boundary {
        self.domain.boundary
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Spectral gaps a_m = λ_m − λ_0.
    pub fn gaps(&self) -> Vec<f64> {
        let l0 = self.eigenvalues[0];
        self.eigenvalues.iter().map(|l| l - l0).collect()
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    /// Normalizing constant Z = ∫ e^V dx.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Values of φ_m at the grid nodes.
    pub fn eigenfunction(&self, m: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[m * n..(m + 1) * n]
    }

    /// Row-major M × n matrix of eigenfunction samples.
    pub fn eigenfunction_matrix(&self) -> &[f64] {
        &self.values
    }

    /// Values of φ_m/φ_0 at the grid nodes.
    pub fn ground_ratio(&self, m: usize) -> &[f64] {
        let n = self.grid.len();
        match &self.ratio {
            Some(r) => &r[m * n..(m + 1) * n],
            None => self.eigenfunction(m),
        }
    }

    /// Per-mode estimates of ‖φ_m‖_∞.
    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    /// Per-mode estimates of ‖φ_m/φ_0‖_∞.
    pub fn ratio_sup_norms(&self) -> &[f64] {
        &self.ratio_sups
    }

    /// μ-quadrature coefficients ∫ f φ_m dμ of nodal values `f`.
    pub fn function_coefficients(&self, f: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let wf: Vec<f64> = f
            .iter()
            .zip(self.grid.weights())
            .map(|(a, w)| a * w)
            .collect();
        (0..self.mode_count())
            .map(|m| {
                self.values[m * n..(m + 1) * n]
                    .iter()
                    .zip(&wf)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// μ(φ_m) for every mode.
    pub fn mu_coefficients(&self) -> Vec<f64> {
        let ones = vec![1.0; self.grid.len()];
        self.function_coefficients(&ones)
    }

    /// Lebesgue density e^V/Z of μ at an arbitrary point.
    pub fn reference_density_at(&self, p: &[f64]) -> f64 {
        match self.domain.interval_bounds() {
            Some(_) => self.domain.potential.value(p[0]).exp() / self.normalizer,
            None => 1.0 / self.normalizer,
        }
    }

    /// Writes φ_m(p) for all modes into `out`.
    pub fn eval(&self, p: &[f64], out: &mut [f64]) {
        self.eval_impl(p, out, None);
    }

    /// Writes φ_m(p) and ∇φ_m(p) (row-major, `dim` entries per mode).
    pub fn eval_with_gradient(&self, p: &[f64], out: &mut [f64], grad: &mut [f64]) {
        self.eval_impl(p, out, Some(grad));
    }

    fn eval_impl(&self, p: &[f64], out: &mut [f64], grad: Option<&mut [f64]>) {
        let m = self.mode_count();
        match &self.expansion {
            Expansion::Trig => {
                let (a, b) = self.domain.interval_bounds().unwrap();
                analytic::trig_modes(self.boundary(), a, b, p[0], &mut out[..m], grad);
            }
            Expansion::Tensor { index } => {
                let axes = self.domain.axes();
                analytic::tensor_modes(self.boundary(), &axes, index, p, out, grad);
            }
            Expansion::Legendre { order, coeffs } => {
                let (a, b) = self.domain.interval_bounds().unwrap();
                galerkin::legendre_modes(a, b, *order, coeffs, m, p[0], out, grad);
            }
        }
    }

    /// Value of the single mode φ_m at `p`.
    pub fn eval_mode(&self, m: usize, p: &[f64]) -> f64 {
        match &self.expansion {
            Expansion::Trig => {
                let (a, b) = self.domain.interval_bounds().unwrap();
                analytic::trig_mode(self.boundary(), a, b, m, p[0])
            }
            Expansion::Tensor { index } => {
                let axes = self.domain.axes();
                let (i, j) = index[m];
                analytic::trig_mode(self.boundary(), axes[0].0, axes[0].1, i, p[0])
                    * analytic::trig_mode(self.boundary(), axes[1].0, axes[1].1, j, p[1])
            }
            Expansion::Legendre { order, coeffs } => {
                let (a, b) = self.domain.interval_bounds().unwrap();
                galerkin::legendre_mode(a, b, &coeffs[m * order..(m + 1) * order], p[0]).0
            }
        }
    }

    /// Derivative of φ_m on an interval domain.
    pub(crate) fn eval_mode_derivative(&self, m: usize, x: f64) -> f64 {
        let (a, b) = self.domain.interval_bounds().expect("interval domain");
        match &self.expansion {
            Expansion::Trig => analytic::trig_mode_derivative(self.boundary(), a, b, m, x),
            Expansion::Legendre { order, coeffs } => {
                galerkin::legendre_mode(a, b, &coeffs[m * order..(m + 1) * order], x).1
            }
            Expansion::Tensor { .. } => unreachable!(),
        }
    }

    /// Writes g_m = φ_m/φ_0 and ∇g_m at an interior point.
    pub fn eval_ratio_with_gradient(&self, p: &[f64], out: &mut [f64], grad: &mut [f64]) {
        let m = self.mode_count();
        let d = self.dim();
        if self.boundary() == Boundary::Dirichlet && matches!(self.expansion, Expansion::Trig) {
            let (a, b) = self.domain.interval_bounds().unwrap();
            analytic::sine_ratio_modes(a, b, p[0], out, grad);
            return;
        }
        self.eval_with_gradient(p, out, grad);
        if self.boundary() == Boundary::Neumann {
            return;
        }
        let f0 = out[0];
        let g0: Vec<f64> = grad[..d].to_vec();
        for k in 0..m {
            let v = out[k];
            for j in 0..d {
                grad[k * d + j] = (grad[k * d + j] * f0 - v * g0[j]) / (f0 * f0);
            }
            out[k] = v / f0;
        }
    }

    /// Eigenvalue growth slope: least-squares fit of log(λ_m − λ_0) against
    /// log m over m ∈ [M/4, M).
    pub fn weyl_slope(&self) -> f64 {
        let m = self.mode_count();
        let lo = (m / 4).max(1);
        let gaps = self.gaps();
        let pts: Vec<(f64, f64)> = (lo..m)
            .filter(|&k| gaps[k] > 0.0)
            .map(|k| ((k as f64).ln(), gaps[k].ln()))
            .collect();
        least_squares_slope(&pts).unwrap_or(f64::NAN)
    }

    /// Constant c with λ_m − λ_0 ≥ c·m^{2/d} for m ≥ M/2, fitted with a 0.9
    /// safety factor from the upper half of the computed spectrum.
    pub fn weyl_constant(&self) -> f64 {
        let m = self.mode_count();
        let p = 2.0 / self.dim() as f64;
        let gaps = self.gaps();
        let lo = (m / 2).max(1);
        let c = (lo..m)
            .map(|k| gaps[k] / (k as f64).powf(p))
            .fold(f64::INFINITY, f64::min);
        if c.is_finite() {
            0.9 * c
        } else {
            // Single-mode basis: fall back to the first gap of the domain scale.
            let vol = self.domain.volume();
            0.9 * std::f64::consts::PI.powi(2) / vol.powf(p)
        }
    }

    /// Residual max_{i,j} |Σ φ_i φ_j w − δ_ij| over all mode pairs.
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.grid.len();
        let m = self.mode_count();
        let w = self.grid.weights();
        let scaled: Vec<f64> = (0..m * n)
            .map(|k| self.values[k] * w[k % n].sqrt())
            .collect();
        let mat = nalgebra::DMatrix::from_row_slice(m, n, &scaled);
        let gram = &mat * mat.transpose();
        let mut res: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                res = res.max((gram[(i, j)] - target).abs());
            }
        }
        res
    }

    /// Residual over a structured sample of pairs: all pairs among the first
    /// 64 modes plus each mode against its two successors.
    pub fn sampled_orthonormality_residual(&self) -> f64 {
        let m = self.mode_count();
        let head = m.min(64);
        let mut res: f64 = 0.0;
        let mut check = |i: usize, j: usize| {
            let v = self.inner(i, j) - if i == j { 1.0 } else { 0.0 };
            res = res.max(v.abs());
        };
        for i in 0..head {
            for j in i..head {
                check(i, j);
            }
        }
        for i in head..m {
            check(i, i);
            for j in [i.saturating_sub(1), i.saturating_sub(2), 0] {
                if j != i {
                    check(i, j);
                }
            }
        }
        res
    }

    fn inner(&self, i: usize, j: usize) -> f64 {
        let w = self.grid.weights();
        self.eigenfunction(i)
            .iter()
            .zip(self.eigenfunction(j))
            .zip(w)
            .map(|((a, b), c)| a * b * c)
            .sum()
    }

    fn compute_sup_norms(&mut self) {
        let m = self.mode_count();
        match &self.expansion {
            Expansion::Trig => {
                self.sup_norms = (0..m)
                    .map(|k| analytic::trig_sup(self.boundary(), k))
                    .collect();
                self.ratio_sups = (0..m)
                    .map(|k| analytic::trig_ratio_sup(self.boundary(), k))
                    .collect();
            }
            Expansion::Tensor { index } => {
                let b = self.boundary();
                self.sup_norms = index
                    .iter()
                    .map(|&(i, j)| analytic::trig_sup(b, i) * analytic::trig_sup(b, j))
                    .collect();
                self.ratio_sups = index
                    .iter()
                    .map(|&(i, j)| analytic::trig_ratio_sup(b, i) * analytic::trig_ratio_sup(b, j))
                    .collect();
            }
            Expansion::Legendre { .. } => {
                let sups: Vec<f64> = (0..m).map(|k| self.refined_sup(k, false)).collect();
                let ratios: Vec<f64> = match self.boundary() {
                    Boundary::Neumann => sups.clone(),
                    Boundary::Dirichlet => (0..m).map(|k| self.refined_sup(k, true)).collect(),
                };
                self.sup_norms = sups;
                self.ratio_sups = ratios;
            }
        }
    }

    /// Grid maximum of |φ_m| (or |φ_m/φ_0|) refined by golden-section search
    /// around the best node, plus boundary values or limits.
    fn refined_sup(&self, m: usize, ratio: bool) -> f64 {
        let (a, b) = self.domain.interval_bounds().unwrap();
        let n = self.grid.len();
        let f = |x: f64| -> f64 {
            let v = self.eval_mode(m, &[x]);
            if ratio {
                (v / self.eval_mode(0, &[x])).abs()
            } else {
                v.abs()
            }
        };
        let vals = if ratio {
            self.ground_ratio(m)
        } else {
            self.eigenfunction(m)
        };
        let (imax, _) = vals.iter().enumerate().fold((0, -1.0), |acc, (i, v)| {
            if v.abs() > acc.1 {
                (i, v.abs())
            } else {
                acc
            }
        });
        let x = |i: usize| self.grid.point(i)[0];
        let lo = if imax == 0 { a } else { x(imax - 1) };
        let hi = if imax + 1 == n { b } else { x(imax + 1) };
        let mut best = golden_max(&f, lo.max(a + 1e-14 * (b - a)), hi.min(b - 1e-14 * (b - a)));
        best = best.max(vals[imax].abs());
        match (self.boundary(), ratio) {
            (Boundary::Neumann, _) => {
                best = best.max(f(a)).max(f(b));
            }
            (Boundary::Dirichlet, true) => {
                for e in [a, b] {
                    let r = self.eval_mode_derivative(m, e) / self.eval_mode_derivative(0, e);
                    best = best.max(r.abs());
                }
            }
            (Boundary::Dirichlet, false) => {}
        }
        best
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    f1.max(f2)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Growth diagnostics for ‖φ_m‖_∞ and ‖φ_m/φ_0‖_∞.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GrowthReport {
    pub sup_norms: Vec<f64>,
    pub ratio_sup_norms: Vec<f64>,
    /// Fitted exponent p in ‖φ_m‖_∞ ≈ C·(m+1)^p.
    pub sup_exponent: f64,
    /// Fitted exponent in ‖φ_m/φ_0‖_∞ ≈ C·(m+1)^p.
    pub ratio_exponent: f64,
    pub sup_bound_exponent: f64,
    pub ratio_bound_exponent: f64,
    pub sup_constant: f64,
    pub ratio_constant: f64,
    pub sup_violation: bool,
    pub ratio_violation: bool,
}

/// Fits growth exponents of the sup norms and checks them against
/// C·m^{1/2} and C·m^{(d+2)/(2d)}; C is fitted on the first half of the modes
/// and a violation is flagged when a later mode exceeds 1.2·C·m^p.
pub fn sup_norm_growth_report(basis: &SpectralBasis) -> Result<GrowthReport> {
    let m = basis.mode_count();
    if m < 16 {
        return Err(Error::InvalidArgument(format!(
            "growth report needs at least 16 modes, got {m}"
        )));
    }
    let d = basis.dim() as f64;
    let fit = |s: &[f64]| {
        let pts: Vec<(f64, f64)> = s
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, v)| (((k + 1) as f64).ln(), v.ln()))
            .collect();
        least_squares_slope(&pts).unwrap_or(f64::NAN)
    };
    let check = |s: &[f64], p: f64| {
        let half = m / 2;
        let c = s[..half]
            .iter()
            .enumerate()
            .map(|(k, v)| v / ((k + 1) as f64).powf(p))
            .fold(0.0, f64::max);
        let violated = s[half..]
            .iter()
            .enumerate()
            .any(|(k, v)| *v > 1.2 * c * ((k + half + 1) as f64).powf(p));
        (c, violated)
    };
    let sup_bound = 0.5;
    let ratio_bound = (d + 2.0) / (2.0 * d);
    let (sup_constant, sup_violation) = check(basis.sup_norms(), sup_bound);
    let (ratio_constant, ratio_violation) = check(basis.ratio_sup_norms(), ratio_bound);
    Ok(GrowthReport {
        sup_norms: basis.sup_norms().to_vec(),
        ratio_sup_norms: basis.ratio_sup_norms().to_vec(),
        sup_exponent: fit(basis.sup_norms()),
        ratio_exponent: fit(basis.ratio_sup_norms()),
        sup_bound_exponent: sup_bound,
        ratio_bound_exponent: ratio_bound,
        sup_constant,
        ratio_constant,
        sup_violation,
        ratio_violation,
    })
}
