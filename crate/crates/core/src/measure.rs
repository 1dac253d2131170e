//! Initial distributions ν and their mode coefficients ν(φ_m).

use std::sync::Arc;

use serde::Serialize;

use crate::domain::Boundary;
use crate::error::{Error, Result};
use crate::spectral::{QuadratureGrid, SpectralBasis};

/// An initial distribution ν.
#[derive(Debug, Clone)]
pub enum InitialDistribution {
    /// ν = μ.
    Reference,
    /// ν = h·μ with `h` sampled at the nodes of `grid`.
    Density {
        grid: Arc<QuadratureGrid>,
        h: Vec<f64>,
    },
    /// ν = δ_x.
    PointMass(Vec<f64>),
    /// Lebesgue density tabulated on a 1D grid, interpolated linearly.
    GridDensity { nodes: Vec<f64>, values: Vec<f64> },
}

impl InitialDistribution {
    pub fn point(x: f64) -> Self {
        InitialDistribution::PointMass(vec![x])
    }

    /// μ_0 = φ_0²μ on the basis grid.
    pub fn ground_state(basis: &SpectralBasis) -> Self {
        InitialDistribution::Density {
            grid: basis.grid().clone(),
            h: basis.eigenfunction(0).iter().map(|v| v * v).collect(),
        }
    }

    /// Density h w.r.t. μ given as a function on the basis grid.
    pub fn density_fn(basis: &SpectralBasis, f: impl Fn(&[f64]) -> f64) -> Self {
        let g = basis.grid();
        InitialDistribution::Density {
            grid: g.clone(),
            h: (0..g.len()).map(|i| f(g.point(i))).collect(),
        }
    }

    pub fn is_density(&self) -> bool {
        !matches!(self, InitialDistribution::PointMass(_))
    }

    pub fn describe(&self) -> String {
        match self {
            InitialDistribution::Reference => "reference".into(),
            InitialDistribution::Density { .. } => "density".into(),
            InitialDistribution::PointMass(x) => format!("point_mass{x:?}"),
            InitialDistribution::GridDensity { .. } => "grid_density".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    /// Coefficients of a probability density against μ.
    Density,
    /// Evaluations φ_m(x0) of a point mass.
    PointMass,
    /// μ-coefficients of a general function.
    Function,
}

/// Bound |c_m| ≤ scale·(m+1)^power assumed for the modes beyond the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub scale: f64,
    pub power: f64,
}

impl Envelope {
    pub fn at(&self, m: usize) -> f64 {
        self.scale * ((m + 1) as f64).powf(self.power)
    }
}

/// Mode coefficients ν(φ_m), m = 0..M−1.
#[derive(Debug, Clone, Serialize)]
pub struct ModeCoefficients {
    pub values: Vec<f64>,
    pub source: String,
    pub kind: CoefficientKind,
    pub envelope: Envelope,
}

impl ModeCoefficients {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the first `m` coefficients.
    pub fn truncated(&self, m: usize) -> Self {
        let mut c = self.clone();
        c.values.truncate(m);
        c
    }

    /// Coefficients of μ itself.
    pub fn reference(basis: &SpectralBasis) -> Self {
        ModeCoefficients {
            values: basis.mu_coefficients(),
            source: "mu".into(),
            kind: CoefficientKind::Density,
            envelope: Envelope {
                scale: 1.0,
                power: 0.0,
            },
        }
    }

    /// μ-coefficients of nodal values of a function f.
    pub fn of_function(basis: &SpectralBasis, f: &[f64]) -> Self {
        let l2 = basis
            .grid()
            .integrate(&f.iter().map(|v| v * v).collect::<Vec<_>>())
            .sqrt();
        ModeCoefficients {
            values: basis.function_coefficients(f),
            source: "function".into(),
            kind: CoefficientKind::Function,
            envelope: Envelope {
                scale: l2,
                power: 0.0,
            },
        }
    }
}

/// Envelope constant B with ‖φ_m‖_∞ ≤ B·(m+1)^{1/2} over the computed modes.
pub(crate) fn point_envelope(basis: &SpectralBasis) -> Envelope {
    let scale = basis
        .sup_norms()
        .iter()
        .enumerate()
        .map(|(k, s)| s / ((k + 1) as f64).sqrt())
        .fold(0.0, f64::max);
    Envelope { scale, power: 0.5 }
}

/// Interpolates a raw Lebesgue density onto the basis grid as h = density/(e^V/Z).
fn grid_density_to_h(basis: &SpectralBasis, nodes: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if basis.dim() != 1 {
        return Err(Error::Unsupported(
            "grid densities are one-dimensional".into(),
        ));
    }
    if nodes.len() != values.len() || nodes.len() < 2 {
        return Err(Error::InvalidDensity(
            "need matching node/value arrays".into(),
        ));
    }
    if !nodes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidDensity("grid nodes must increase".into()));
    }
    if let Some(v) = values.iter().find(|v| **v < -1e-12) {
        return Err(Error::InvalidDensity(format!("negative density value {v}")));
    }
    let mass: f64 = nodes
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
        .sum();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidDensity(format!(
            "total mass {mass} differs from 1"
        )));
    }
    let g = basis.grid();
    let mut h: Vec<f64> = (0..g.len())
        .map(|i| {
            let x = g.point(i)[0];
            let k = nodes.partition_point(|&v| v <= x);
            let dens = if k == 0 || k == nodes.len() {
                0.0
            } else {
                let t = (x - nodes[k - 1]) / (nodes[k] - nodes[k - 1]);
                values[k - 1] * (1.0 - t) + values[k] * t
            };
            dens.max(0.0) / g.reference_density()[i]
        })
        .collect();
    let q = g.integrate(&h);
    h.iter_mut().for_each(|v| *v /= q);
    Ok(h)
}

fn check_density(h: &[f64], grid: &QuadratureGrid) -> Result<()> {
    if let Some(v) = h.iter().find(|v| **v < -1e-12 || !v.is_finite()) {
        return Err(Error::InvalidDensity(format!(
            "density value {v} is negative"
        )));
    }
    let mass = grid.integrate(h);
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidDensity(format!(
            "total mass {mass} differs from 1"
        )));
    }
    Ok(())
}

/// Density h of ν against μ on the basis grid (`None` for point masses).
pub fn density_on_grid(
    nu: &InitialDistribution,
    basis: &SpectralBasis,
) -> Result<Option<Vec<f64>>> {
    match nu {
        InitialDistribution::Reference => Ok(Some(vec![1.0; basis.grid().len()])),
        InitialDistribution::Density { grid, h } => {
            if !grid.same_nodes(basis.grid()) {
                return Err(Error::GridMismatch);
            }
            Ok(Some(h.clone()))
        }
        InitialDistribution::GridDensity { nodes, values } => {
            grid_density_to_h(basis, nodes, values).map(Some)
        }
        InitialDistribution::PointMass(_) => Ok(None),
    }
}

/// Mode coefficients ν(φ_m) by quadrature (densities) or evaluation (point
/// masses).
pub fn project(nu: &InitialDistribution, basis: &SpectralBasis) -> Result<ModeCoefficients> {
    if let InitialDistribution::PointMass(x) = nu {
        let dom = basis.domain();
        if x.len() != basis.dim() || !dom.contains(x) {
            return Err(Error::BoundaryPointMass(x.clone()));
        }
        if basis.boundary() == Boundary::Dirichlet && !dom.is_interior(x) {
            return Err(Error::BoundaryPointMass(x.clone()));
        }
        let mut values = vec![0.0; basis.mode_count()];
        basis.eval(x, &mut values);
        return Ok(ModeCoefficients {
            values,
            source: nu.describe(),
            kind: CoefficientKind::PointMass,
            envelope: point_envelope(basis),
        });
    }
    if let InitialDistribution::Reference = nu {
        return Ok(ModeCoefficients::reference(basis));
    }
    let h = density_on_grid(nu, basis)?.expect("density variant");
    check_density(&h, basis.grid())?;
    let mut c = ModeCoefficients::of_function(basis, &h);
    c.kind = CoefficientKind::Density;
    c.source = nu.describe();
    Ok(c)
}

/// ‖h‖_{L^p(μ)} of a density variant, `None` for point masses.
pub fn density_lp_norm(
    nu: &InitialDistribution,
    basis: &SpectralBasis,
    p: f64,
) -> Result<Option<f64>> {
    Ok(density_on_grid(nu, basis)?.map(|h| {
        let pow: Vec<f64> = h.iter().map(|v| v.abs().powf(p)).collect();
        basis.grid().integrate(&pow).powf(1.0 / p)
    }))
}
