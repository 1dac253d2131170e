//! Wasserstein-2 distances by three independent methods, and the upper and
//! lower bounds used to bracket W2(μ_t^ν, μ_0)².

mod bounds;
mod entropic;
mod exact;
mod grid_measure;
mod quantile;

use serde::Serialize;

pub use bounds::{
    h_minus1_upper_bound, h_minus1_upper_bound_values, inverse_generator_potential,
    kantorovich_dual_lower, log_mean, smoothed_potential, DualLowerBound, GridPotential,
    UpperBound,
};
pub use entropic::{w2_entropic, EpsSchedule};
pub use exact::{w2_exact_discrete, w2_exact_points, MAX_EXACT_ATOMS};
pub use grid_measure::{
    GridMeasure, ReferenceMeasure, DEFAULT_DEGREE, DEFAULT_PANELS, DENSITY_FLOOR, MASS_TOL,
};
pub use quantile::{w2_quantile_1d, DEFAULT_QUANTILE_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Quantile1d,
    ExactDiscrete,
    Entropic,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Quantile1d => "quantile1d",
            Method::ExactDiscrete => "exact-discrete",
            Method::Entropic => "entropic",
        }
    }
}

/// A coupling stored as COO triplets (source index, target index, mass).
#[derive(Debug, Clone, Default, Serialize)]
pub struct Coupling {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub mass: Vec<f64>,
}

impl Coupling {
    pub fn row_sums(&self, n: usize) -> Vec<f64> {
        let mut s = vec![0.0; n];
        for (r, m) in self.rows.iter().zip(&self.mass) {
            s[*r] += m;
        }
        s
    }

    pub fn col_sums(&self, n: usize) -> Vec<f64> {
        let mut s = vec![0.0; n];
        for (c, m) in self.cols.iter().zip(&self.mass) {
            s[*c] += m;
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,target,mass\n");
        for k in 0..self.mass.len() {
            s.push_str(&format!(
                "{},{},{:.17e}\n",
                self.rows[k], self.cols[k], self.mass[k]
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportResult {
    pub w2: f64,
    pub w2_squared: f64,
    pub method: Method,
    /// Bound on the error of `w2_squared`.
    pub error_estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<Coupling>,
    /// Solver iterations (simplex pivots or Sinkhorn sweeps); zero otherwise.
    pub iterations: usize,
}

impl TransportResult {
    pub(crate) fn new(w2_squared: f64, method: Method, error_estimate: f64) -> Self {
        let v = w2_squared.max(0.0);
        TransportResult {
            w2: v.sqrt(),
            w2_squared: v,
            method,
            error_estimate,
            plan: None,
            iterations: 0,
        }
    }

    /// Bound on the error of `w2` implied by `error_estimate`.
    pub fn w2_error(&self) -> f64 {
        (self.w2_squared + self.error_estimate).sqrt() - self.w2
    }
}
