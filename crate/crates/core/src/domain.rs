//! Model domains, boundary conditions and potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// Geometric shape of the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShape", into = "RawShape")]
pub enum Shape {
    Interval { bounds: [f64; 2] },
    Rectangle { x: [f64; 2], y: [f64; 2] },
}

// Flat wire forms: internally tagged enums would buffer numbers, which the
// arbitrary-precision float representation does not survive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShape {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<[f64; 2]>,
}

impl TryFrom<RawShape> for Shape {
    type Error = Error;
    fn try_from(r: RawShape) -> Result<Self> {
        match (r.kind.as_str(), r.bounds, r.x, r.y) {
            ("interval", Some(bounds), None, None) => Ok(Shape::Interval { bounds }),
            ("rectangle", None, Some(x), Some(y)) => Ok(Shape::Rectangle { x, y }),
            _ => Err(Error::InvalidDomain(format!(
                "shape `{}` needs `bounds` (interval) or `x` and `y` (rectangle)",
                r.kind
            ))),
        }
    }
}

impl From<Shape> for RawShape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Interval { bounds } => RawShape {
                kind: "interval".into(),
                bounds: Some(bounds),
                x: None,
                y: None,
            },
            Shape::Rectangle { x, y } => RawShape {
                kind: "rectangle".into(),
                bounds: None,
                x: Some(x),
                y: Some(y),
            },
        }
    }
}

/// Potential V defining μ(dx) ∝ e^V dx.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotential", into = "RawPotential")]
pub enum Potential {
    Zero,
    Tabulated(TabulatedPotential),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

impl TryFrom<RawPotential> for Potential {
    type Error = Error;
    fn try_from(r: RawPotential) -> Result<Self> {
        match (r.kind.as_str(), r.nodes, r.values) {
            ("zero", None, None) => Ok(Potential::Zero),
            ("tabulated", Some(n), Some(v)) => {
                Ok(Potential::Tabulated(TabulatedPotential::new(n, v)?))
            }
            _ => Err(Error::InvalidArgument(format!(
                "potential `{}` needs kind `zero`, or `tabulated` with `nodes` and `values`",
                r.kind
            ))),
        }
    }
}

impl From<Potential> for RawPotential {
    fn from(p: Potential) -> Self {
        match p {
            Potential::Zero => RawPotential {
                kind: "zero".into(),
                nodes: None,
                values: None,
            },
            Potential::Tabulated(t) => RawPotential {
                kind: "tabulated".into(),
                nodes: Some(t.nodes),
                values: Some(t.values),
            },
        }
    }
}

impl Potential {
    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Tabulated(t) => t.value(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Tabulated(t) => t.derivative(x),
        }
    }
}

/// Smooth V given on a grid, interpolated by a natural cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    nodes: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

/// Minimum number of table entries accepted for a potential.
pub const MIN_POTENTIAL_NODES: usize = 8;

impl TabulatedPotential {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::InvalidArgument(
                "potential nodes and values differ in length".into(),
            ));
        }
        if nodes.len() < MIN_POTENTIAL_NODES {
            return Err(Error::CoarsePotential(format!(
                "{} nodes given, at least {MIN_POTENTIAL_NODES} required",
                nodes.len()
            )));
        }
        if !nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "potential nodes must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "potential values must be finite".into(),
            ));
        }
        let second = natural_spline_second_derivatives(&nodes, &values);
        Ok(Self {
            nodes,
            values,
            second,
        })
    }

    /// Tabulates `f` at `n` equispaced points of [a, b].
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = n.max(2);
        let nodes: Vec<f64> = (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.nodes.len();
        match self.nodes.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        (self.values[i + 1] - self.values[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * self.second[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.second[i + 1]
    }
}

fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal solve for interior second derivatives (Thomas algorithm).
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

/// A model domain with boundary rule and potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub shape: Shape,
    pub boundary: Boundary,
    #[serde(default = "zero_potential")]
    pub potential: Potential,
}

fn zero_potential() -> Potential {
    Potential::Zero
}

impl Domain {
    pub fn interval(a: f64, b: f64, boundary: Boundary) -> Result<Self> {
        let d = Domain {
            shape: Shape::Interval { bounds: [a, b] },
            boundary,
            potential: Potential::Zero,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_interval(boundary: Boundary) -> Self {
        Self::interval(0.0, 1.0, boundary).unwrap()
    }

    pub fn rectangle(x: [f64; 2], y: [f64; 2], boundary: Boundary) -> Result<Self> {
        let d = Domain {
            shape: Shape::Rectangle { x, y },
            boundary,
            potential: Potential::Zero,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_potential(mut self, potential: Potential) -> Result<Self> {
        self.potential = potential;
        self.validate()?;
        Ok(self)
    }

    /// Checks the structural invariants of the domain.
    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        match &self.shape {
            Shape::Interval { bounds: [a, b] } => {
                if !ok(*a, *b) {
                    return Err(Error::InvalidDomain(format!("need b > a, got [{a}, {b}]")));
                }
                if let Potential::Tabulated(t) = &self.potential {
                    let n = t.nodes();
                    let span = b - a;
                    if n[0] > a + 1e-12 * span || n[n.len() - 1] < b - 1e-12 * span {
                        return Err(Error::CoarsePotential(
                            "potential table does not cover the interval".into(),
                        ));
                    }
                    let max_gap = n.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
                    if max_gap > span / MIN_POTENTIAL_NODES as f64 * 1.5 {
                        return Err(Error::CoarsePotential(format!(
                            "table spacing {max_gap} too wide for the interval"
                        )));
                    }
                }
            }
            Shape::Rectangle { x, y } => {
                if !ok(x[0], x[1]) || !ok(y[0], y[1]) {
                    return Err(Error::InvalidDomain(
                        "rectangle sides must be positive".into(),
                    ));
                }
                if !self.potential.is_zero() {
                    return Err(Error::Unsupported(
                        "rectangle domains require a zero potential".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Interval { .. } => 1,
            Shape::Rectangle { .. } => 2,
        }
    }

    /// Interval bounds; `None` for rectangles.
    pub fn interval_bounds(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Interval { bounds } => Some((bounds[0], bounds[1])),
            _ => None,
        }
    }

    /// Per-axis bounds (one pair for an interval, two for a rectangle).
    pub fn axes(&self) -> Vec<(f64, f64)> {
        match self.shape {
            Shape::Interval { bounds } => vec![(bounds[0], bounds[1])],
            Shape::Rectangle { x, y } => vec![(x[0], x[1]), (y[0], y[1])],
        }
    }

    /// Lebesgue volume of the domain.
    pub fn volume(&self) -> f64 {
        self.axes().iter().map(|(a, b)| b - a).product()
    }

    /// Distance from `p` to the boundary; negative outside.
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        self.axes()
            .iter()
            .zip(p)
            .map(|(&(a, b), &x)| (x - a).min(b - x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_interior(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && self.boundary_distance(p) > 0.0
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && self.boundary_distance(p) >= 0.0
    }
}
