//! Experiment runner: versioned configs, convergence studies of
//! t²W2(μ_t^ν, μ_0)² toward I, sandwich reports and Monte Carlo cross-checks.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Boundary, Domain, Potential};
use crate::error::{Error, Result};
use crate::limit::{limit_for, LimitReport};
use crate::mc::{self, Estimand, McDistance, SimulationConfig};
use crate::measure::InitialDistribution;
use crate::semigroup::{conditional_density, rho_tilde_coefficients, ConditionalDensity};
use crate::spectral::{build_analytic_basis_with_grid, solve_sturm_liouville, SpectralBasis};
use crate::transport::{
    h_minus1_upper_bound, inverse_generator_potential, kantorovich_dual_lower, smoothed_potential,
    w2_entropic, w2_exact_discrete, w2_quantile_1d, EpsSchedule, GridMeasure, GridPotential,
    TransportResult,
};

pub const CONFIG_VERSION: &str = "1";
/// Column layout of `convergence.csv`.
pub const CONVERGENCE_SCHEMA: &str = "convergence/1";
pub const SANDWICH_SCHEMA: &str = "sandwich/1";
pub const W2_SCHEMA: &str = "w2/1";

/// Initial distribution as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNu", into = "RawNu")]
pub enum NuSpec {
    Reference,
    GroundState,
    Point(Vec<f64>),
    /// Lebesgue density through (nodes, values).
    Tabulated {
        nodes: Vec<f64>,
        values: Vec<f64>,
    },
    /// Two-column CSV (x, density), resolved relative to the config file.
    File(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNu {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<PathBuf>,
}

impl TryFrom<RawNu> for NuSpec {
    type Error = Error;
    fn try_from(r: RawNu) -> Result<Self> {
        match (r.kind.as_str(), r.x, r.nodes, r.values, r.file) {
            ("reference", None, None, None, None) => Ok(NuSpec::Reference),
            ("ground_state", None, None, None, None) => Ok(NuSpec::GroundState),
            ("point", Some(x), None, None, None) => Ok(NuSpec::Point(x)),
            ("tabulated", None, Some(nodes), Some(values), None) => {
                Ok(NuSpec::Tabulated { nodes, values })
            }
            ("file", None, None, None, Some(f)) => Ok(NuSpec::File(f)),
            (k, ..) => Err(Error::Config(format!(
                "nu `{k}`: expected reference, ground_state, point {{x}}, \
                 tabulated {{nodes, values}} or file {{file}}"
            ))),
        }
    }
}

impl From<NuSpec> for RawNu {
    fn from(n: NuSpec) -> Self {
        let mut r = RawNu {
            kind: String::new(),
            x: None,
            nodes: None,
            values: None,
            file: None,
        };
        match n {
            NuSpec::Reference => r.kind = "reference".into(),
            NuSpec::GroundState => r.kind = "ground_state".into(),
            NuSpec::Point(x) => {
                r.kind = "point".into();
                r.x = Some(x);
            }
            NuSpec::Tabulated { nodes, values } => {
                r.kind = "tabulated".into();
                r.nodes = Some(nodes);
                r.values = Some(values);
            }
            NuSpec::File(f) => {
                r.kind = "file".into();
                r.file = Some(f);
            }
        }
        r
    }
}

impl NuSpec {
    pub fn resolve(&self, basis: &SpectralBasis, base: &Path) -> Result<InitialDistribution> {
        Ok(match self {
            NuSpec::Reference => InitialDistribution::Reference,
            NuSpec::GroundState => InitialDistribution::ground_state(basis),
            NuSpec::Point(x) => InitialDistribution::PointMass(x.clone()),
            NuSpec::Tabulated { nodes, values } => InitialDistribution::GridDensity {
                nodes: nodes.clone(),
                values: values.clone(),
            },
            NuSpec::File(f) => {
                let (nodes, values) = read_two_columns(&base.join(f))?;
                InitialDistribution::GridDensity { nodes, values }
            }
        })
    }
}

fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b))) => {
                x.push(a);
                y.push(b);
            }
            // A header row is allowed on the first line.
            _ if n == 0 => {}
            _ => {
                return Err(Error::Config(format!(
                    "{}:{}: expected two numbers",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Truncation {
    pub modes: usize,
    /// Quadrature nodes per axis; None picks the basis default.
    pub grid: Option<usize>,
    /// Sup-norm tolerance for the density series (ρ_M − ρ_{M/2}).
    pub series_tol: f64,
    /// Tolerance for the tail of the limit constant.
    pub limit_tol: f64,
    /// Grid for the Sturm–Liouville solver when V is not zero.
    pub sl_grid: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            modes: 128,
            grid: None,
            series_tol: 1e-2,
            limit_tol: 1e-8,
            sl_grid: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Quantile1d,
    ExactDiscrete,
    Entropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSettings {
    pub method: MethodChoice,
    pub quantile_nodes: usize,
    /// Cells per measure for the exact solver.
    pub atoms: usize,
    pub entropic: EpsSchedule,
}

impl Default for TransportSettings {
    fn default() -> Self {
        TransportSettings {
            method: MethodChoice::Quantile1d,
            quantile_nodes: crate::transport::DEFAULT_QUANTILE_NODES,
            atoms: 256,
            entropic: EpsSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandwichSettings {
    /// Smoothing times s = εθ/2 (ε = t^{−eps_exponent}) tried for the dual
    /// candidate, besides the unsmoothed one.
    pub theta: Vec<f64>,
    pub eps_exponent: f64,
}

impl Default for SandwichSettings {
    fn default() -> Self {
        SandwichSettings {
            theta: vec![0.5, 1.0, 2.0],
            eps_exponent: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub bins: usize,
    pub bootstrap: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            horizon: 2.0,
            dt: 1e-3,
            n_paths: 100_000,
            bins: mc::DEFAULT_BINS,
            bootstrap: mc::DEFAULT_BOOTSTRAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: String,
    pub domain: Domain,
    pub nu: NuSpec,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub transport: TransportSettings,
    #[serde(default)]
    pub sandwich: SandwichSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSettings>,
    /// Output directory; the CLI's --out overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Relative gap a run must reach at its last time to pass.
    #[serde(default = "default_gap_tolerance")]
    pub gap_tolerance: f64,
    /// Directory that relative file references resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_times() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, 16.0]
}

fn default_gap_tolerance() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn new(domain: Domain, nu: NuSpec) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION.into(),
            domain,
            nu,
            times: default_times(),
            truncation: Truncation::default(),
            transport: TransportSettings::default(),
            sandwich: SandwichSettings::default(),
            mc: None,
            output: None,
            seed: 0,
            gap_tolerance: default_gap_tolerance(),
            base_dir: PathBuf::new(),
        }
    }

    /// Parses and validates; relative `file` paths resolve against the
    /// working directory.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let c = Self::parse(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; relative `file` paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            c.base_dir = dir.to_path_buf();
        }
        c.validate()?;
        Ok(c)
    }

    fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version `{}` (expected `{CONFIG_VERSION}`)",
                self.version
            )));
        }
        self.domain.validate()?;
        if self.times.is_empty() {
            return Err(Error::Config("time grid is empty".into()));
        }
        if self.times.iter().any(|t| !(*t > 0.0)) || self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "time grid must be positive and strictly increasing".into(),
            ));
        }
        if self.truncation.modes < 2 {
            return Err(Error::Config("need at least two modes".into()));
        }
        if let NuSpec::File(f) = &self.nu {
            let p = self.base_dir.join(f);
            if !p.is_file() {
                return Err(Error::Config(format!("nu file {} not found", p.display())));
            }
        }
        if self.sandwich.theta.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("smoothing θ values must be positive".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<SpectralBasis> {
        let tr = &self.truncation;
        match self.domain.potential {
            Potential::Zero => build_analytic_basis_with_grid(&self.domain, tr.modes, tr.grid),
            Potential::Tabulated(_) => solve_sturm_liouville(&self.domain, tr.modes, tr.sl_grid),
        }
    }

    pub fn initial(&self, basis: &SpectralBasis) -> Result<InitialDistribution> {
        self.nu.resolve(basis, &self.base_dir)
    }
}

/// Provenance carried by every numeric row.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub modes: usize,
    pub series_tail: f64,
    pub series_tol: f64,
    pub method: &'static str,
    pub method_error: f64,
    pub time_shift: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub w2: f64,
    pub w2_squared: f64,
    /// t²·W2².
    pub scaled: f64,
    pub limit: f64,
    pub limit_tail: f64,
    /// t²W2²/I − 1.
    pub relative_gap: f64,
    /// H^{-1}-type upper bound on W2².
    pub upper_bound: f64,
    /// Kantorovich dual lower bound on W2² (Dirichlet only).
    pub lower_bound: Option<f64>,
    pub provenance: Provenance,
}

/// Least-squares fit |gap| ≈ c·t^{−α} over rows with a nonzero gap, and the
/// constant for the fixed order α = 1.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub prefactor_order_one: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub schema: &'static str,
    pub boundary: Boundary,
    pub nu: String,
    pub limit: LimitReport,
    pub rows: Vec<ConvergenceRow>,
    pub fit: Option<GapFit>,
    /// |gap| nonincreasing over the last three times.
    pub monotone_tail: bool,
    pub gap_tolerance: f64,
    pub passed: bool,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# schema: {}\n", self.schema);
        s.push_str(
            "t,w2,w2_squared,scaled,limit,relative_gap,upper_bound,lower_bound,\
             method,method_error,series_tail,series_tol,limit_tail,modes,time_shift,seed\n",
        );
        for r in &self.rows {
            let p = &r.provenance;
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{:.12e},{},{},{:.3e},{:.3e},{:.3e},{:.3e},{},{},{}\n",
                r.t,
                r.w2,
                r.w2_squared,
                r.scaled,
                r.limit,
                r.relative_gap,
                r.upper_bound,
                r.lower_bound.map(|v| format!("{v:.12e}")).unwrap_or_default(),
                p.method,
                p.method_error,
                p.series_tail,
                p.series_tol,
                r.limit_tail,
                p.modes,
                p.time_shift.map(|v| format!("{v:e}")).unwrap_or_default(),
                p.seed
            ));
        }
        s
    }
}

pub fn fit_gap(rows: &[(f64, f64)]) -> Option<GapFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, g)| g.abs() > 0.0 && g.is_finite())
        .map(|(t, g)| (*t, g.abs()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().map(|(t, g)| (t.ln(), g.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let c1 = pts.iter().map(|(t, g)| g / t).sum::<f64>()
        / pts.iter().map(|(t, _)| t.powi(-2)).sum::<f64>();
    Some(GapFit {
        exponent: -slope,
        prefactor: (my - slope * mx).exp(),
        prefactor_order_one: c1,
        points: pts.len(),
    })
}

/// μ_t^ν (or the mean empirical measure) and the reference measure.
struct Pair {
    h: ConditionalDensity,
    mt: GridMeasure,
    m0: GridMeasure,
}

fn pair(basis: &SpectralBasis, nu: &InitialDistribution, t: f64, tol: f64) -> Result<Pair> {
    let h = conditional_density(basis, nu, t, tol)?;
    if !h.truncation.accepted() {
        return Err(Error::Truncation {
            tail: h.truncation.tail_estimate,
            tol,
            required_modes: 2 * basis.mode_count(),
        });
    }
    Ok(Pair {
        mt: GridMeasure::from_conditional(&h, basis)?,
        m0: GridMeasure::ground_measure(basis)?,
        h,
    })
}

fn distance(p: &Pair, s: &TransportSettings) -> Result<TransportResult> {
    match s.method {
        MethodChoice::Quantile1d => w2_quantile_1d(&p.mt, &p.m0, s.quantile_nodes),
        MethodChoice::ExactDiscrete => {
            let (a, ea) = p.mt.atomize(s.atoms)?;
            let (b, eb) = p.m0.atomize(s.atoms)?;
            let (xa, wa) = a.atom_data().unwrap();
            let (xb, wb) = b.atom_data().unwrap();
            let mut r = w2_exact_discrete(xa, wa, xb, wb)?;
            let d = ea + eb;
            r.error_estimate += d * (2.0 * r.w2 + d);
            Ok(r)
        }
        MethodChoice::Entropic => w2_entropic(&p.mt, &p.m0, &s.entropic),
    }
}

/// Best dual lower bound over the unsmoothed candidate L_0^{-1}ρ̃_t and its
/// smoothings. Returns the value and the θ that produced it (None when the
/// unsmoothed candidate won).
fn dual_lower(
    basis: &SpectralBasis,
    p: &Pair,
    t: f64,
    s: &SandwichSettings,
) -> Result<(f64, Option<f64>)> {
    let c = rho_tilde_coefficients(
        basis,
        &p.h.nu_coeffs,
        &p.h.mu_coeffs,
        p.h.t_effective,
        p.h.normalization,
    );
    let f: GridPotential = inverse_generator_potential(basis, &c)?;
    let mut best = (kantorovich_dual_lower(&p.m0, &p.mt, &f)?.value, None);
    let eps = t.powf(-s.eps_exponent);
    for &theta in &s.theta {
        let g = smoothed_potential(basis, &f, eps, theta)?;
        let v = kantorovich_dual_lower(&p.m0, &p.mt, &g)?.value;
        if v > best.0 {
            best = (v, Some(theta));
        }
    }
    Ok(best)
}

fn convergence_row(
    cfg: &ExperimentConfig,
    basis: &SpectralBasis,
    nu: &InitialDistribution,
    limit: &LimitReport,
    t: f64,
) -> Result<ConvergenceRow> {
    let p = pair(basis, nu, t, cfg.truncation.series_tol)?;
    let w = distance(&p, &cfg.transport)?;
    let upper = h_minus1_upper_bound(&p.h, basis)?.value;
    let lower = match basis.boundary() {
        Boundary::Dirichlet => Some(dual_lower(basis, &p, t, &cfg.sandwich)?.0),
        Boundary::Neumann => None,
    };
    let scaled = t * t * w.w2_squared;
    Ok(ConvergenceRow {
        t,
        w2: w.w2,
        w2_squared: w.w2_squared,
        scaled,
        limit: limit.value,
        limit_tail: limit.tail_bound,
        relative_gap: scaled / limit.value - 1.0,
        upper_bound: upper,
        lower_bound: lower,
        provenance: Provenance {
            modes: basis.mode_count(),
            series_tail: p.h.truncation.tail_estimate,
            series_tol: cfg.truncation.series_tol,
            method: w.method.tag(),
            method_error: w.error_estimate,
            time_shift: p.h.time_shift,
            seed: cfg.seed,
        },
    })
}

/// t²W2(μ_t^ν, μ_0)² against I over the configured time grid. On a Neumann
/// basis the mean empirical measure is compared with μ instead.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if cfg.domain.dim() != 1 {
        return Err(Error::Unsupported(
            "convergence studies need a one-dimensional domain".into(),
        ));
    }
    let basis = cfg.basis()?;
    let nu = cfg.initial(&basis)?;
    let limit = limit_for(&basis, &nu, cfg.truncation.limit_tol)?;
    let rows: Vec<ConvergenceRow> = cfg
        .times
        .par_iter()
        .map(|&t| convergence_row(cfg, &basis, &nu, &limit, t).map_err(|e| e.at_time(t)))
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.relative_gap.abs()).collect();
    let tail = &gaps[gaps.len().saturating_sub(3)..];
    let monotone_tail = tail.windows(2).all(|w| w[1] <= w[0]);
    let fit = fit_gap(
        &rows
            .iter()
            .map(|r| (r.t, r.relative_gap))
            .collect::<Vec<_>>(),
    );
    let passed = monotone_tail && gaps.last().is_some_and(|g| *g <= cfg.gap_tolerance);
    Ok(ConvergenceReport {
        schema: CONVERGENCE_SCHEMA,
        boundary: basis.boundary(),
        nu: nu.describe(),
        limit,
        rows,
        fit,
        monotone_tail,
        gap_tolerance: cfg.gap_tolerance,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub schema: &'static str,
    pub t: f64,
    pub lower: f64,
    /// θ of the winning smoothed dual candidate; None for the raw one.
    pub lower_theta: Option<f64>,
    pub w2_squared: f64,
    pub upper: f64,
    pub upper_ratio: f64,
    pub lower_ratio: f64,
    /// lower ≤ W2² ≤ upper within the method error.
    pub ordered: bool,
    pub boundary_strip: f64,
    pub provenance: Provenance,
}

impl SandwichReport {
    pub fn to_csv(&self) -> String {
        let p = &self.provenance;
        format!(
            "# schema: {}\nt,lower,w2_squared,upper,upper_ratio,lower_ratio,ordered,method,method_error,series_tail,modes,seed\n\
             {},{:.12e},{:.12e},{:.12e},{:.6},{:.6},{},{},{:.3e},{:.3e},{},{}\n",
            self.schema,
            self.t,
            self.lower,
            self.w2_squared,
            self.upper,
            self.upper_ratio,
            self.lower_ratio,
            self.ordered,
            p.method,
            p.method_error,
            p.series_tail,
            p.modes,
            p.seed
        )
    }
}

/// lower (dual) ≤ W2² ≤ upper (H^{-1}) at one time, Dirichlet boundary.
pub fn run_sandwich(cfg: &ExperimentConfig, t: f64) -> Result<SandwichReport> {
    cfg.validate()?;
    if cfg.domain.boundary != Boundary::Dirichlet || cfg.domain.dim() != 1 {
        return Err(Error::Unsupported(
            "sandwich reports need a Dirichlet interval".into(),
        ));
    }
    let basis = cfg.basis()?;
    let nu = cfg.initial(&basis)?;
    let inner = || -> Result<SandwichReport> {
        let p = pair(&basis, &nu, t, cfg.truncation.series_tol)?;
        let w = distance(&p, &cfg.transport)?;
        let up = h_minus1_upper_bound(&p.h, &basis)?;
        let (lower, theta) = dual_lower(&basis, &p, t, &cfg.sandwich)?;
        let w2sq = w.w2_squared;
        let err = w.error_estimate;
        let ratio = |v: f64| if w2sq > 0.0 { v / w2sq } else { f64::NAN };
        Ok(SandwichReport {
            schema: SANDWICH_SCHEMA,
            t,
            lower,
            lower_theta: theta,
            w2_squared: w2sq,
            upper: up.value,
            upper_ratio: ratio(up.value),
            lower_ratio: ratio(lower),
            ordered: lower <= w2sq + err && w2sq <= up.value + err,
            boundary_strip: up.boundary_strip,
            provenance: Provenance {
                modes: basis.mode_count(),
                series_tail: p.h.truncation.tail_estimate,
                series_tol: cfg.truncation.series_tol,
                method: w.method.tag(),
                method_error: err,
                time_shift: p.h.time_shift,
                seed: cfg.seed,
            },
        })
    };
    inner().map_err(|e| e.at_time(t))
}

#[derive(Debug, Clone, Serialize)]
pub struct McCrosscheckReport {
    pub schema: &'static str,
    pub t: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub survival_count: usize,
    pub survival_fraction: f64,
    pub survival_spectral: f64,
    pub survival_se: f64,
    /// W1 between the occupation histogram and the spectral measure.
    pub occupation_w1: McDistance,
    /// W1 between the terminal histogram and the spectral law of X_t.
    pub terminal_w1: McDistance,
    pub w2_mc: f64,
    pub w2_spectral: f64,
    pub w2_bars: McDistance,
    pub series_tail: f64,
    pub agree: bool,
}

/// Law of X_t given survival, Σ e^{−λ_k t}ν(φ_k)φ_k ρ_V normalized.
/// Law of X_t given survival, Σ_k e^{−λ_k t} ν(φ_k) φ_k μ normalized.
pub fn single_time_law(
    basis: &SpectralBasis,
    nu: &InitialDistribution,
    t: f64,
) -> Result<GridMeasure> {
    let (a, b) = basis.domain().interval_bounds().unwrap();
    let c = crate::measure::project(nu, basis)?;
    let lam = basis.eigenvalues();
    let w: Vec<f64> = (0..basis.mode_count())
        .map(|k| (-(lam[k] - lam[0]) * t).exp() * c.values[k])
        .collect();
    let m = basis.mode_count();
    let f = |x: f64| {
        let mut phi = vec![0.0; m];
        basis.eval(&[x], &mut phi);
        phi.iter().zip(&w).map(|(p, c)| p * c).sum::<f64>() * basis.reference_density_at(&[x])
    };
    // The panel measure insists on unit mass, so normalize first; a
    // Richardson-extrapolated midpoint sum is accurate to O(h⁴).
    let midpoint = |n: usize| {
        let h = (b - a) / n as f64;
        (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
    };
    let mass = (4.0 * midpoint(4096) - midpoint(2048)) / 3.0;
    GridMeasure::from_fn(a, b, 256, 16, |x| (f(x) / mass).max(0.0))
}

pub const MC_SCHEMA: &str = "mc/1";

impl McCrosscheckReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# schema: {MC_SCHEMA}\n");
        s.push_str(
            "t,n_paths,dt,seed,survival_count,survival_fraction,survival_spectral,survival_se,\
             occupation_w1,occupation_w1_tol,terminal_w1,terminal_w1_tol,w2_mc,w2_spectral,\
             w2_tol,series_tail,agree\n",
        );
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.t,
            self.n_paths,
            self.dt,
            self.seed,
            self.survival_count,
            self.survival_fraction,
            self.survival_spectral,
            self.survival_se,
            self.occupation_w1.value,
            self.occupation_w1.tolerance(),
            self.terminal_w1.value,
            self.terminal_w1.tolerance(),
            self.w2_mc,
            self.w2_spectral,
            self.w2_bars.tolerance(),
            self.series_tail,
            self.agree
        ));
        s
    }
}

/// Spectral versus simulated conditional laws at the configured MC horizon.
pub fn run_mc_crosscheck(cfg: &ExperimentConfig) -> Result<McCrosscheckReport> {
    cfg.validate()?;
    let ms = cfg.mc.clone().unwrap_or_default();
    let t = ms.horizon;
    let basis = cfg.basis()?;
    let nu = cfg.initial(&basis)?;
    let inner = || -> Result<McCrosscheckReport> {
        let mut sc = SimulationConfig::new(cfg.domain.clone(), nu.clone(), t);
        sc.dt = ms.dt;
        sc.n_paths = ms.n_paths;
        sc.bins = ms.bins;
        sc.bootstrap = ms.bootstrap;
        sc.seed = cfg.seed;
        sc.checkpoints = vec![t];
        let s = mc::simulate(&sc)?;
        let p = pair(&basis, &nu, t, cfg.truncation.series_tol)?;
        let occupation_w1 = mc::histogram_w1(&s, Estimand::Occupation, &p.mt)?;
        let terminal_w1 =
            mc::histogram_w1(&s, Estimand::Terminal, &single_time_law(&basis, &nu, t)?)?;
        let w = mc::ensemble_w2(&s, &p.m0)?;
        let spectral = w2_quantile_1d(&p.mt, &p.m0, cfg.transport.quantile_nodes)?;
        let coeffs = crate::measure::project(&nu, &basis)?;
        let survival_spectral = match basis.boundary() {
            Boundary::Dirichlet => crate::semigroup::survival_probability(&basis, &coeffs, t),
            Boundary::Neumann => 1.0,
        };
        let sp = &s.survival[0];
        let agree = occupation_w1.value <= occupation_w1.tolerance()
            && terminal_w1.value <= terminal_w1.tolerance()
            && (w.result.w2 - spectral.w2).abs() <= w.error_bars.tolerance();
        Ok(McCrosscheckReport {
            schema: MC_SCHEMA,
            t,
            n_paths: ms.n_paths,
            dt: s.config.dt,
            seed: cfg.seed,
            survival_count: s.survival_count,
            survival_fraction: sp.fraction,
            survival_spectral,
            survival_se: sp.standard_error,
            occupation_w1,
            terminal_w1,
            w2_mc: w.result.w2,
            w2_spectral: spectral.w2,
            w2_bars: w.error_bars,
            series_tail: p.h.truncation.tail_estimate,
            agree,
        })
    };
    inner().map_err(|e| e.at_time(t))
}

/// Conditional density at time t for the configured ν, with its basis.
pub fn density_at(cfg: &ExperimentConfig, t: f64) -> Result<(SpectralBasis, ConditionalDensity)> {
    cfg.validate()?;
    let basis = cfg.basis()?;
    let nu = cfg.initial(&basis)?;
    let p = pair(&basis, &nu, t, cfg.truncation.series_tol).map_err(|e| e.at_time(t))?;
    Ok((basis, p.h))
}

#[derive(Debug, Clone, Serialize)]
pub struct W2Report {
    pub schema: &'static str,
    pub t: f64,
    pub w2: f64,
    pub w2_squared: f64,
    pub scaled: f64,
    pub upper_bound: f64,
    pub provenance: Provenance,
}

/// W2(μ_t^ν, μ_0) at a single time by the configured method.
pub fn run_w2(cfg: &ExperimentConfig, t: f64) -> Result<W2Report> {
    cfg.validate()?;
    if cfg.domain.dim() != 1 {
        return Err(Error::Unsupported(
            "distances need a one-dimensional domain".into(),
        ));
    }
    let basis = cfg.basis()?;
    let nu = cfg.initial(&basis)?;
    let inner = || -> Result<W2Report> {
        let p = pair(&basis, &nu, t, cfg.truncation.series_tol)?;
        let w = distance(&p, &cfg.transport)?;
        Ok(W2Report {
            schema: W2_SCHEMA,
            t,
            w2: w.w2,
            w2_squared: w.w2_squared,
            scaled: t * t * w.w2_squared,
            upper_bound: h_minus1_upper_bound(&p.h, &basis)?.value,
            provenance: Provenance {
                modes: basis.mode_count(),
                series_tail: p.h.truncation.tail_estimate,
                series_tol: cfg.truncation.series_tol,
                method: w.method.tag(),
                method_error: w.error_estimate,
                time_shift: p.h.time_shift,
                seed: cfg.seed,
            },
        })
    };
    inner().map_err(|e| e.at_time(t))
}

/// Writes `<stem>.json` and, when given, `<stem>.csv` into `dir`.
pub fn write_report<T: Serialize>(
    dir: &Path,
    stem: &str,
    report: &T,
    csv: Option<&str>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let j = dir.join(format!("{stem}.json"));
    fs::write(&j, serde_json::to_string_pretty(report)?)?;
    out.push(j);
    if let Some(c) = csv {
        let p = dir.join(format!("{stem}.csv"));
        fs::write(&p, c)?;
        out.push(p);
    }
    Ok(out)
}
