use serde::Serialize;

use super::GridMeasure;
use crate::error::{Error, Result};
use crate::semigroup::{ground_kernel_matrix, ConditionalDensity};
use crate::spectral::SpectralBasis;

/// Width of the boundary strip reported separately by the upper bound.
pub const BOUNDARY_STRIP: f64 = 1e-3;
const GRADIENT_CHECK_TOL: f64 = 1e-4;

/// Logarithmic mean (b − a)/(log b − log a), with M(a, a) = a and 0 when
/// either argument is nonpositive.
pub fn log_mean(a: f64, b: f64) -> f64 {
    if !(a > 0.0 && b > 0.0) {
        return 0.0;
    }
    let r = (b / a).ln();
    if r.abs() < 1e-4 {
        // a·(e^r − 1)/r
        a * (1.0 + r / 2.0 + r * r / 6.0 + r * r * r / 24.0)
    } else {
        (b - a) / r
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UpperBound {
    /// Upper bound on W2(μ_t^ν, μ_0)².
    pub value: f64,
    /// Part of `value` from nodes within the boundary strip.
    pub boundary_strip: f64,
    /// Nodes with h ≤ 0, given zero weight.
    pub excluded_nodes: usize,
    pub modes: usize,
    /// Worst relative mismatch of analytic against finite-difference gradients.
    pub gradient_check: f64,
}

/// ∫ |∇L_0^{-1}(h − 1)|²/M(h, 1) dμ_0 for the density of a conditional measure.
pub fn h_minus1_upper_bound(h: &ConditionalDensity, basis: &SpectralBasis) -> Result<UpperBound> {
    if !h.grid().same_nodes(basis.grid()) {
        return Err(Error::GridMismatch);
    }
    h_minus1_upper_bound_values(basis, &h.rho)
}

/// As [`h_minus1_upper_bound`] for ρ = h − 1 given at the basis grid nodes.
pub fn h_minus1_upper_bound_values(basis: &SpectralBasis, rho: &[f64]) -> Result<UpperBound> {
    let g = basis.grid();
    if rho.len() != g.len() {
        return Err(Error::GridMismatch);
    }
    let check = gradient_check(basis)?;
    let m = basis.mode_count();
    let d = basis.dim();
    let gaps = basis.gaps();
    let w = g.weights();
    let phi0 = basis.eigenfunction(0);
    let mut b = vec![0.0; m];
    for (k, bk) in b.iter_mut().enumerate().skip(1) {
        let c: f64 = (0..g.len())
            .map(|i| w[i] * phi0[i] * basis.eigenfunction(k)[i] * rho[i])
            .sum();
        *bk = -c / gaps[k];
    }
    let mut vals = vec![0.0; m];
    let mut grads = vec![0.0; m * d];
    let (mut total, mut strip, mut excluded) = (0.0, 0.0, 0);
    for i in 0..g.len() {
        let x = g.point(i);
        let weight = log_mean(1.0 + rho[i], 1.0);
        if weight <= 0.0 {
            excluded += 1;
            continue;
        }
        basis.eval_ratio_with_gradient(x, &mut vals, &mut grads);
        let mut sq = 0.0;
        for j in 0..d {
            let gu: f64 = (1..m).map(|k| b[k] * grads[k * d + j]).sum();
            sq += gu * gu;
        }
        let contrib = w[i] * phi0[i] * phi0[i] * sq / weight;
        total += contrib;
        if basis.domain().boundary_distance(x) < BOUNDARY_STRIP {
            strip += contrib;
        }
    }
    Ok(UpperBound {
        value: total,
        boundary_strip: strip,
        excluded_nodes: excluded,
        modes: m,
        gradient_check: check,
    })
}

/// Compares ∇(φ_m/φ_0) with centered differences at interior sample points.
fn gradient_check(basis: &SpectralBasis) -> Result<f64> {
    let m = basis.mode_count();
    let d = basis.dim();
    let axes = basis.domain().axes();
    let modes: Vec<usize> = [1, m / 2, m - 1]
        .into_iter()
        .filter(|&k| k >= 1 && k < m)
        .collect();
    if modes.is_empty() {
        return Ok(0.0);
    }
    let mut worst: f64 = 0.0;
    let (mut v, mut gr) = (vec![0.0; m], vec![0.0; m * d]);
    let (mut vp, mut gp) = (vec![0.0; m], vec![0.0; m * d]);
    for s in 0..9 {
        let frac = 0.1 + 0.8 * s as f64 / 8.0;
        let p: Vec<f64> = axes
            .iter()
            .enumerate()
            .map(|(j, (a, b))| a + (b - a) * (frac + 0.013 * j as f64))
            .collect();
        basis.eval_ratio_with_gradient(&p, &mut v, &mut gr);
        for &k in &modes {
            for j in 0..d {
                let len = axes[j].1 - axes[j].0;
                let h = 1e-3 * len / (k + 1) as f64;
                let mut q = p.clone();
                q[j] += h;
                basis.eval_ratio_with_gradient(&q, &mut vp, &mut gp);
                let up = vp[k];
                q[j] -= 2.0 * h;
                basis.eval_ratio_with_gradient(&q, &mut vp, &mut gp);
                let fd = (up - vp[k]) / (2.0 * h);
                let scale = gr[k * d + j].abs().max(basis.ratio_sup_norms()[k] / len);
                worst = worst.max((fd - gr[k * d + j]).abs() / scale);
            }
        }
    }
    if worst > GRADIENT_CHECK_TOL {
        return Err(Error::GradientCheck(worst));
    }
    Ok(worst)
}

/// Piecewise-linear potential through (nodes, values), extended as a
/// constant from the end nodes to [lo, hi].
#[derive(Debug, Clone)]
pub struct GridPotential {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl GridPotential {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if nodes.len() != values.len() || nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "potential needs matching arrays".into(),
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes[0] < lo || nodes[nodes.len() - 1] > hi
        {
            return Err(Error::InvalidArgument(
                "potential nodes must increase inside [lo, hi]".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("potential must be bounded".into()));
        }
        Ok(GridPotential {
            nodes,
            values,
            lo,
            hi,
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return self.values[0];
        }
        if x >= self.nodes[n - 1] {
            return self.values[n - 1];
        }
        let k = self.nodes.partition_point(|&v| v <= x) - 1;
        let t = (x - self.nodes[k]) / (self.nodes[k + 1] - self.nodes[k]);
        self.values[k] + t * (self.values[k + 1] - self.values[k])
    }

    /// f^c(y) = min_{x ∈ [lo, hi]} ½(x − y)² − f(x), exactly for the
    /// piecewise-linear f.
    pub fn c_transform(&self, y: f64) -> f64 {
        let n = self.nodes.len();
        let seg = |l: f64, r: f64, fl: f64, fr: f64| -> f64 {
            if r <= l {
                return 0.5 * (l - y).powi(2) - fl;
            }
            let beta = (fr - fl) / (r - l);
            let x = (y + beta).clamp(l, r);
            0.5 * (x - y).powi(2) - (fl + beta * (x - l))
        };
        let mut best = seg(self.lo, self.nodes[0], self.values[0], self.values[0]);
        for k in 0..n - 1 {
            best = best.min(seg(
                self.nodes[k],
                self.nodes[k + 1],
                self.values[k],
                self.values[k + 1],
            ));
        }
        best.min(seg(
            self.nodes[n - 1],
            self.hi,
            self.values[n - 1],
            self.values[n - 1],
        ))
    }
}

/// L_0^{-1} of the function with ground-basis coefficients `c`
/// (ρ = Σ_{m≥1} c_m φ_m/φ_0): −Σ c_m/(λ_m − λ_0) φ_m/φ_0 at the grid nodes.
pub fn inverse_generator_potential(basis: &SpectralBasis, c: &[f64]) -> Result<GridPotential> {
    let (lo, hi) = basis
        .domain()
        .interval_bounds()
        .ok_or_else(|| Error::Unsupported("dual potentials are one-dimensional".into()))?;
    if c.len() != basis.mode_count() {
        return Err(Error::InvalidArgument(
            "coefficient count differs from basis".into(),
        ));
    }
    let gaps = basis.gaps();
    let g = basis.grid();
    let mut values = vec![0.0; g.len()];
    for k in 1..c.len() {
        let s = -c[k] / gaps[k];
        for (v, r) in values.iter_mut().zip(basis.ground_ratio(k)) {
            *v += s * r;
        }
    }
    GridPotential::new(g.points().to_vec(), values, lo, hi)
}

/// φ = −ε log P^0_s e^{−f/ε} at the grid nodes, s = εθ/2.
pub fn smoothed_potential(
    basis: &SpectralBasis,
    f: &GridPotential,
    eps: f64,
    theta: f64,
) -> Result<GridPotential> {
    if !(eps > 0.0 && theta > 0.0) {
        return Err(Error::InvalidArgument("ε and θ must be positive".into()));
    }
    let g = basis.grid();
    let n = g.len();
    let (k, _) = ground_kernel_matrix(basis, 0.5 * eps * theta);
    let phi0 = basis.eigenfunction(0);
    let fv: Vec<f64> = (0..n).map(|i| f.value(g.point(i)[0])).collect();
    let fmin = fv.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = (0..n)
        .map(|j| g.weights()[j] * phi0[j] * phi0[j] * (-(fv[j] - fmin) / eps).exp())
        .collect();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let s: f64 = (0..n).map(|j| k[i * n + j] * e[j]).sum();
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(
                "smoothing kernel is not positive at this time; increase ε·θ".into(),
            ));
        }
        values.push(fmin - eps * s.ln());
    }
    GridPotential::new(g.points().to_vec(), values, f.lo, f.hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct DualLowerBound {
    /// max(0, raw).
    pub value: f64,
    /// 2(∫f dm1 + ∫f^c dm2).
    pub raw: f64,
}

/// Weak-duality lower bound on W2(m1, m2)² from a trial potential on m1.
pub fn kantorovich_dual_lower(
    m1: &GridMeasure,
    m2: &GridMeasure,
    f_init: &GridPotential,
) -> Result<DualLowerBound> {
    if m1.dim() != 1 || m2.dim() != 1 {
        return Err(Error::Unsupported("dual bound is one-dimensional".into()));
    }
    let a = m1.expect(|x| f_init.value(x), &f_init.nodes);
    let b = m2.expect(|y| f_init.c_transform(y), &f_init.nodes);
    let raw = 2.0 * (a + b);
    Ok(DualLowerBound {
        value: raw.max(0.0),
        raw,
    })
}
