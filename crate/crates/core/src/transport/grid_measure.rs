//! Probability measures on a line segment (piecewise-polynomial densities or
//! atoms) and finite point clouds in any dimension.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::semigroup::ConditionalDensity;
use crate::spectral::SpectralBasis;

/// Allowed negative undershoot of density samples.
pub const DENSITY_FLOOR: f64 = -1e-12;
/// Allowed deviation of the total mass from 1 before renormalization.
pub const MASS_TOL: f64 = 1e-8;

/// Default panel layout used for smooth densities.
pub const DEFAULT_PANELS: usize = 512;
pub const DEFAULT_DEGREE: usize = 16;

/// Which measure the stored density values are taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMeasure {
    Lebesgue,
    Mu,
    MuZero,
}

#[derive(Debug, Clone)]
struct Panel {
    left: f64,
    right: f64,
    /// Chebyshev coefficients of the Lebesgue density on the panel.
    coeffs: Vec<f64>,
    /// Antiderivative coefficients in the panel variable s ∈ [−1, 1].
    anti: Vec<f64>,
    anti_left: f64,
}

impl Panel {
    fn new(left: f64, right: f64, coeffs: Vec<f64>) -> Self {
        let anti = antiderivative(&coeffs);
        let anti_left = clenshaw(&anti, -1.0);
        Panel {
            left,
            right,
            coeffs,
            anti,
            anti_left,
        }
    }

    fn half(&self) -> f64 {
        0.5 * (self.right - self.left)
    }

    fn to_s(&self, x: f64) -> f64 {
        ((2.0 * x - self.left - self.right) / (self.right - self.left)).clamp(-1.0, 1.0)
    }

    fn density(&self, x: f64) -> f64 {
        clenshaw(&self.coeffs, self.to_s(x))
    }

    fn mass_to(&self, s: f64) -> f64 {
        self.half() * (clenshaw(&self.anti, s) - self.anti_left)
    }

    fn mass(&self) -> f64 {
        self.mass_to(1.0)
    }

    /// Point x in the panel carrying mass `r` to its left.
    fn invert(&self, r: f64) -> f64 {
        let total = self.mass();
        if total <= 0.0 {
            return self.left;
        }
        let h = self.half();
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut s = (-1.0 + 2.0 * r / total).clamp(-1.0, 1.0);
        for _ in 0..100 {
            let g = self.mass_to(s) - r;
            if g > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = h * clenshaw(&self.coeffs, s);
            let mut next = s - g / d;
            if !(d > 0.0) || !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let done = (next - s).abs() <= 2e-16 || hi - lo <= 4e-16;
            s = next;
            if done {
                break;
            }
        }
        0.5 * (self.left + self.right) + h * s
    }
}

/// Chebyshev–Lobatto points cos(πj/n), j = 0..n, on [−1, 1].
fn lobatto(n: usize) -> Vec<f64> {
    if n == 0 {
        return vec![0.0];
    }
    (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect()
}

/// Chebyshev coefficients of the interpolant through values at [`lobatto`] points.
fn cheb_coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len() - 1;
    if n == 0 {
        return vec![values[0]];
    }
    (0..=n)
        .map(|k| {
            let mut s = 0.0;
            for (j, v) in values.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += w * v * (PI * (j * k) as f64 / n as f64).cos();
            }
            let c = 2.0 * s / n as f64;
            if k == 0 || k == n {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

fn clenshaw(c: &[f64], s: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * s * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    s * b1 - b2 + c[0]
}

fn antiderivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let at = |k: usize| if k < n { c[k] } else { 0.0 };
    let mut out = vec![0.0; n + 1];
    out[1] = at(0) - 0.5 * at(2);
    for k in 2..=n {
        out[k] = (at(k - 1) - at(k + 1)) / (2.0 * k as f64);
    }
    out
}

#[derive(Debug, Clone)]
enum Support {
    Atoms { points: Vec<f64>, weights: Vec<f64> },
    Panels(Vec<Panel>),
}

/// A probability measure for the transport solvers.
#[derive(Debug, Clone)]
pub struct GridMeasure {
    dim: usize,
    reference: ReferenceMeasure,
    support: Support,
    /// Sample nodes and density values the measure was built from.
    nodes: Vec<f64>,
    values: Vec<f64>,
    /// Cumulative masses at panel or atom boundaries (1D only).
    cumulative: Vec<f64>,
}

fn validate_samples(values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidDensity(format!(
            "non-finite density sample {v}"
        )));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < DENSITY_FLOOR {
        return Err(Error::InvalidDensity(format!(
            "density sample {min:e} is negative"
        )));
    }
    Ok(())
}

fn check_mass(mass: f64) -> Result<()> {
    if !((mass - 1.0).abs() <= MASS_TOL) {
        return Err(Error::InvalidDensity(format!(
            "total mass {mass} differs from 1"
        )));
    }
    Ok(())
}

impl GridMeasure {
    /// Weighted atoms on the line. Weights are renormalized to sum to 1.
    pub fn atoms(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::point_cloud(1, points, weights)
    }

    /// Weighted atoms in `dim` dimensions (points stored row-major).
    pub fn point_cloud(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() || weights.is_empty() {
            return Err(Error::InvalidArgument(
                "point/weight arrays do not match".into(),
            ));
        }
        validate_samples(&weights)?;
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite atom position".into()));
        }
        let total: f64 = weights.iter().sum();
        check_mass(total)?;
        let (mut points, mut weights) = (points, weights);
        if dim == 1 {
            let mut idx: Vec<usize> = (0..weights.len()).collect();
            idx.sort_by(|&i, &j| points[i].total_cmp(&points[j]));
            points = idx.iter().map(|&i| points[i]).collect();
            weights = idx.iter().map(|&i| weights[i]).collect();
        }
        let weights: Vec<f64> = weights.iter().map(|w| w.max(0.0) / total).collect();
        let cumulative = if dim == 1 {
            prefix(&weights)
        } else {
            Vec::new()
        };
        Ok(GridMeasure {
            dim,
            reference: ReferenceMeasure::Lebesgue,
            nodes: points.clone(),
            values: weights.clone(),
            support: Support::Atoms { points, weights },
            cumulative,
        })
    }

    /// Lebesgue density `f` on [a, b], sampled on `panels` equal panels at
    /// Chebyshev–Lobatto points of the given degree.
    pub fn from_fn(
        a: f64,
        b: f64,
        panels: usize,
        degree: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if !(b > a) || panels == 0 {
            return Err(Error::InvalidArgument(
                "need a < b and at least one panel".into(),
            ));
        }
        let s = lobatto(degree);
        let mut nodes = Vec::with_capacity(panels * (degree + 1));
        let mut values = Vec::with_capacity(nodes.capacity());
        let mut list = Vec::with_capacity(panels);
        for k in 0..panels {
            let l = a + (b - a) * k as f64 / panels as f64;
            let r = if k + 1 == panels {
                b
            } else {
                a + (b - a) * (k + 1) as f64 / panels as f64
            };
            let vals: Vec<f64> = s
                .iter()
                .map(|&sj| f(0.5 * (l + r) + 0.5 * (r - l) * sj))
                .collect();
            validate_samples(&vals)?;
            for (sj, v) in s.iter().zip(&vals) {
                nodes.push(0.5 * (l + r) + 0.5 * (r - l) * sj);
                values.push(*v);
            }
            let vals: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
            list.push(Panel::new(l, r, cheb_coefficients(&vals)));
        }
        Self::from_panels(list, nodes, values)
    }

    /// Continuous piecewise-linear density through (nodes, values).
    pub fn piecewise_linear(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() || nodes.len() < 2 {
            return Err(Error::InvalidArgument("need at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "nodes must increase strictly".into(),
            ));
        }
        validate_samples(&values)?;
        let list = nodes
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, v)| {
                let (l, r) = (v[0].max(0.0), v[1].max(0.0));
                Panel::new(x[0], x[1], vec![0.5 * (l + r), 0.5 * (r - l)])
            })
            .collect();
        Self::from_panels(list, nodes, values)
    }

    /// Piecewise-constant density with the given bin masses.
    pub fn histogram(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if edges.len() != masses.len() + 1 || masses.is_empty() {
            return Err(Error::InvalidArgument(
                "need one more edge than bins".into(),
            ));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "edges must increase strictly".into(),
            ));
        }
        validate_samples(&masses)?;
        let list = edges
            .windows(2)
            .zip(&masses)
            .map(|(e, m)| Panel::new(e[0], e[1], vec![m.max(0.0) / (e[1] - e[0])]))
            .collect();
        let centers = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        let dens = edges
            .windows(2)
            .zip(&masses)
            .map(|(e, m)| m / (e[1] - e[0]))
            .collect();
        Self::from_panels(list, centers, dens)
    }

    fn from_panels(panels: Vec<Panel>, nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let masses: Vec<f64> = panels.iter().map(Panel::mass).collect();
        if let Some(m) = masses.iter().find(|m| **m < -1e-14) {
            return Err(Error::NonMonotoneCdf(*m));
        }
        let total: f64 = masses.iter().sum();
        check_mass(total)?;
        let panels: Vec<Panel> = panels
            .into_iter()
            .map(|p| {
                let c = p.coeffs.iter().map(|c| c / total).collect();
                Panel::new(p.left, p.right, c)
            })
            .collect();
        let masses: Vec<f64> = panels.iter().map(|p| p.mass().max(0.0)).collect();
        let mut cumulative = prefix(&masses);
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(GridMeasure {
            dim: 1,
            reference: ReferenceMeasure::Lebesgue,
            support: Support::Panels(panels),
            nodes,
            values,
            cumulative,
        })
    }

    /// The measure μ_t^ν (or the mean empirical measure) of a spectral
    /// density, as a smooth panel measure on the interval.
    pub fn from_conditional(h: &ConditionalDensity, basis: &SpectralBasis) -> Result<Self> {
        let (a, b) = interval(basis)?;
        Self::from_fn(a, b, DEFAULT_PANELS, DEFAULT_DEGREE, |x| {
            h.lebesgue_density(basis, &[x])
        })
    }

    /// μ_0 = φ_0²μ for a Dirichlet basis, μ for a Neumann basis.
    pub fn ground_measure(basis: &SpectralBasis) -> Result<Self> {
        let (a, b) = interval(basis)?;
        let m = Self::from_fn(a, b, DEFAULT_PANELS, DEFAULT_DEGREE, |x| {
            let p = [x];
            basis.eval_mode(0, &p).powi(2) * basis.reference_density_at(&p)
        })?;
        Ok(m.with_reference(ReferenceMeasure::MuZero))
    }

    /// Atoms at the basis quadrature nodes with masses w_i·h_i·φ_0(x_i)².
    pub fn from_grid_density(basis: &SpectralBasis, h: &[f64]) -> Result<Self> {
        let g = basis.grid();
        if h.len() != g.len() {
            return Err(Error::GridMismatch);
        }
        let phi0 = basis.eigenfunction(0);
        let w: Vec<f64> = (0..g.len())
            .map(|i| g.weights()[i] * h[i] * phi0[i] * phi0[i])
            .collect();
        Self::point_cloud(g.dim(), g.points().to_vec(), w)
    }

    /// Product of two one-dimensional atomic measures.
    pub fn product(x: &GridMeasure, y: &GridMeasure) -> Result<Self> {
        let (Some((px, wx)), Some((py, wy))) = (x.atom_data(), y.atom_data()) else {
            return Err(Error::InvalidArgument(
                "product needs atomic factors".into(),
            ));
        };
        if x.dim != 1 || y.dim != 1 {
            return Err(Error::InvalidArgument("product needs 1D factors".into()));
        }
        let mut pts = Vec::with_capacity(2 * wx.len() * wy.len());
        let mut w = Vec::with_capacity(wx.len() * wy.len());
        for i in 0..wx.len() {
            for j in 0..wy.len() {
                pts.push(px[i]);
                pts.push(py[j]);
                w.push(wx[i] * wy[j]);
            }
        }
        Self::point_cloud(2, pts, w)
    }

    pub fn with_reference(mut self, r: ReferenceMeasure) -> Self {
        self.reference = r;
        self
    }

    pub fn reference(&self) -> ReferenceMeasure {
        self.reference
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.support, Support::Atoms { .. })
    }

    pub fn atom_data(&self) -> Option<(&[f64], &[f64])> {
        match &self.support {
            Support::Atoms { points, weights } => Some((points, weights)),
            Support::Panels(_) => None,
        }
    }

    /// Cumulative masses at panel (or atom) boundaries; 1D only.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Smallest interval containing the support (1D).
    pub fn bounds(&self) -> (f64, f64) {
        match &self.support {
            Support::Atoms { points, .. } => (
                points.iter().cloned().fold(f64::INFINITY, f64::min),
                points.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
            Support::Panels(p) => (p[0].left, p[p.len() - 1].right),
        }
    }

    /// Lebesgue density at x (panels only; zero outside).
    pub fn density(&self, x: f64) -> f64 {
        match &self.support {
            Support::Panels(p) => match self.panel_at(p, x) {
                Some(k) => p[k].density(x),
                None => 0.0,
            },
            Support::Atoms { .. } => 0.0,
        }
    }

    fn panel_at(&self, p: &[Panel], x: f64) -> Option<usize> {
        if x < p[0].left || x > p[p.len() - 1].right {
            return None;
        }
        let k = p.partition_point(|q| q.right < x);
        Some(k.min(p.len() - 1))
    }

    /// F(x) = mass of (−∞, x].
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.support {
            Support::Atoms { points, weights } => {
                let k = points.partition_point(|&p| p <= x);
                weights[..k].iter().sum()
            }
            Support::Panels(p) => {
                if x <= p[0].left {
                    return 0.0;
                }
                if x >= p[p.len() - 1].right {
                    return 1.0;
                }
                let k = self.panel_at(p, x).unwrap();
                (self.cumulative[k] + p[k].mass_to(p[k].to_s(x))).clamp(0.0, 1.0)
            }
        }
    }

    /// Left-continuous quantile F^{-1}(u) = inf{x : F(x) ≥ u}.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.support {
            Support::Atoms { points, .. } => {
                let k = self.cumulative.partition_point(|&c| c < u);
                points[k.clamp(1, points.len()) - 1]
            }
            Support::Panels(p) => {
                let k = self
                    .cumulative
                    .partition_point(|&c| c <= u)
                    .saturating_sub(1)
                    .min(p.len() - 1);
                let r = (u - self.cumulative[k]).max(0.0);
                p[k].invert(r)
            }
        }
    }

    /// ∫ f dm. Panels are integrated with 12-point Gauss rules on each panel
    /// refined at `breaks`.
    pub fn expect(&self, f: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
        match &self.support {
            Support::Atoms { points, weights } => {
                points.iter().zip(weights).map(|(x, w)| w * f(*x)).sum()
            }
            Support::Panels(p) => {
                let (gx, gw) = gauss_legendre(12);
                let mut sorted: Vec<f64> = breaks.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mut total = 0.0;
                for panel in p {
                    let lo = sorted.partition_point(|&b| b <= panel.left);
                    let hi = sorted.partition_point(|&b| b < panel.right);
                    let mut cuts = vec![panel.left];
                    cuts.extend_from_slice(&sorted[lo..hi]);
                    cuts.push(panel.right);
                    for w in cuts.windows(2) {
                        let (a, b) = (w[0], w[1]);
                        if b <= a {
                            continue;
                        }
                        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                        for (s, wt) in gx.iter().zip(&gw) {
                            let x = c + h * s;
                            total += h * wt * panel.density(x) * f(x);
                        }
                    }
                }
                total
            }
        }
    }

    /// ∫_{[a, b]} f dm for a panel measure.
    pub fn expect_on(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let Support::Panels(p) = &self.support else {
            return self.expect(|x| if x >= a && x <= b { f(x) } else { 0.0 }, &[]);
        };
        let (gx, gw) = gauss_legendre(12);
        let first = p.partition_point(|q| q.right <= a);
        let mut total = 0.0;
        for panel in &p[first..] {
            if panel.left >= b {
                break;
            }
            let (l, r) = (panel.left.max(a), panel.right.min(b));
            if r <= l {
                continue;
            }
            let (c, h) = (0.5 * (l + r), 0.5 * (r - l));
            for (s, wt) in gx.iter().zip(&gw) {
                let x = c + h * s;
                total += h * wt * panel.density(x) * f(x);
            }
        }
        total
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x, &[])
    }

    /// `n` atoms at the barycenters of equal-width cells over the support,
    /// and the bound sqrt(Σ within-cell variance) on W2 to the original.
    pub fn atomize(&self, n: usize) -> Result<(GridMeasure, f64)> {
        if self.dim != 1 {
            return Err(Error::Unsupported("atomization is one-dimensional".into()));
        }
        if self.is_atomic() {
            return Ok((self.clone(), 0.0));
        }
        let (a, b) = self.bounds();
        let edges: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
        let mut pts = Vec::with_capacity(n);
        let mut ws = Vec::with_capacity(n);
        let mut var = 0.0;
        for e in edges.windows(2) {
            let w = self.cdf(e[1]) - self.cdf(e[0]);
            if w <= 0.0 {
                continue;
            }
            let m1 = self.expect_on(e[0], e[1], |x| x);
            let m2 = self.expect_on(e[0], e[1], |x| x * x);
            let c = (m1 / w).clamp(e[0], e[1]);
            var += (m2 - w * c * c).max(0.0);
            pts.push(c);
            ws.push(w);
        }
        let total: f64 = ws.iter().sum();
        ws.iter_mut().for_each(|w| *w /= total);
        Ok((GridMeasure::atoms(pts, ws)?, var.sqrt()))
    }
}

fn prefix(w: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(w.len() + 1);
    let mut acc = 0.0;
    c.push(0.0);
    for v in w {
        acc += v;
        c.push(acc);
    }
    c
}

fn interval(basis: &SpectralBasis) -> Result<(f64, f64)> {
    basis
        .domain()
        .interval_bounds()
        .ok_or_else(|| Error::Unsupported("panel measures need an interval domain".into()))
}
