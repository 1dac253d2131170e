//! Monte Carlo simulation of the killed or reflected diffusion
//! dX = V'(X)dt + √2 dB on an interval.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Boundary, Domain};
use crate::error::{Error, Result};
use crate::measure::InitialDistribution;
use crate::transport::{w2_quantile_1d, GridMeasure, TransportResult};

pub const DEFAULT_BINS: usize = 256;
pub const DEFAULT_BOOTSTRAP: usize = 200;
/// Survivors required before a histogram distance is reported.
pub const MIN_SURVIVORS: usize = 1000;
const CHUNK: usize = 4096;
const SAMPLER_CELLS: usize = 8192;
/// Quantile nodes used for each bootstrap replicate.
const REPLICATE_NODES: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryRule {
    #[serde(rename = "kill-with-bridge-correction")]
    KillWithBridge,
    #[serde(rename = "reflect")]
    Reflect,
}

impl BoundaryRule {
    pub fn for_boundary(b: Boundary) -> Self {
        match b {
            Boundary::Dirichlet => BoundaryRule::KillWithBridge,
            Boundary::Neumann => BoundaryRule::Reflect,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub domain: Domain,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub initial: InitialDistribution,
    pub boundary_rule: BoundaryRule,
    pub bins: usize,
    pub bootstrap: usize,
    /// Times (≤ horizon) at which the number of surviving paths is recorded.
    pub checkpoints: Vec<f64>,
}

impl SimulationConfig {
    pub fn new(domain: Domain, initial: InitialDistribution, horizon: f64) -> Self {
        let rule = BoundaryRule::for_boundary(domain.boundary);
        SimulationConfig {
            domain,
            dt: 1e-3,
            horizon,
            n_paths: 100_000,
            seed: 0,
            initial,
            boundary_rule: rule,
            bins: DEFAULT_BINS,
            bootstrap: DEFAULT_BOOTSTRAP,
            checkpoints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.domain.dim() != 1 {
            return Err(Error::Unsupported(
                "the simulator handles intervals only".into(),
            ));
        }
        if BoundaryRule::for_boundary(self.domain.boundary) != self.boundary_rule {
            return Err(Error::InvalidArgument(format!(
                "boundary rule {:?} does not match a {:?} domain",
                self.boundary_rule, self.domain.boundary
            )));
        }
        if !(self.horizon > 0.0) || !(self.dt > 0.0) || self.dt > self.horizon / 100.0 {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt ≤ t/100, got dt = {} and t = {}",
                self.dt, self.horizon
            )));
        }
        if self.n_paths == 0 || self.bins == 0 {
            return Err(Error::InvalidArgument(
                "need at least one path and one bin".into(),
            ));
        }
        if let Some(c) = self
            .checkpoints
            .iter()
            .find(|c| !(**c > 0.0 && **c <= self.horizon))
        {
            return Err(Error::InvalidArgument(format!(
                "checkpoint {c} outside (0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Inverse-CDF sampler for the initial law on a fine uniform grid.
enum Sampler {
    Point(f64),
    Table { a: f64, h: f64, cdf: Vec<f64> },
}

impl Sampler {
    fn new(domain: &Domain, nu: &InitialDistribution) -> Result<Self> {
        let (a, b) = domain.interval_bounds().unwrap();
        let lebesgue: Box<dyn Fn(f64) -> f64 + '_> = match nu {
            InitialDistribution::PointMass(p) => {
                let x = p[0];
                if !(a..=b).contains(&x) {
                    return Err(Error::InvalidArgument(format!(
                        "start point {x} outside [{a}, {b}]"
                    )));
                }
                return Ok(Sampler::Point(x));
            }
            InitialDistribution::Reference => Box::new(|x| domain.potential.value(x).exp()),
            InitialDistribution::Density { grid, h } => {
                let nodes: Vec<f64> = (0..grid.len()).map(|i| grid.point(i)[0]).collect();
                let h = h.clone();
                Box::new(move |x| interp(&nodes, &h, x) * domain.potential.value(x).exp())
            }
            InitialDistribution::GridDensity { nodes, values } => Box::new(|x| {
                if x < nodes[0] || x > *nodes.last().unwrap() {
                    0.0
                } else {
                    interp(nodes, values, x)
                }
            }),
        };
        let h = (b - a) / SAMPLER_CELLS as f64;
        let mut cdf = Vec::with_capacity(SAMPLER_CELLS + 1);
        cdf.push(0.0);
        let mut prev = lebesgue(a);
        for k in 1..=SAMPLER_CELLS {
            let next = lebesgue(a + k as f64 * h);
            if prev < 0.0 || next < 0.0 {
                return Err(Error::InvalidDensity("initial density is negative".into()));
            }
            cdf.push(cdf[k - 1] + 0.5 * (prev + next) * h);
            prev = next;
        }
        let z = *cdf.last().unwrap();
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::InvalidDensity("initial density has no mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= z);
        Ok(Sampler::Table { a, h, cdf })
    }

    fn sample(&self, u: f64) -> f64 {
        match self {
            Sampler::Point(x) => *x,
            Sampler::Table { a, h, cdf } => {
                let k = cdf.partition_point(|c| *c <= u).clamp(1, cdf.len() - 1);
                let (lo, hi) = (cdf[k - 1], cdf[k]);
                let s = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
                a + h * ((k - 1) as f64 + s)
            }
        }
    }
}

/// Linear interpolation with constant extension.
fn interp(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let k = nodes.partition_point(|n| *n <= x);
    if k == 0 {
        return values[0];
    }
    if k == nodes.len() {
        return *values.last().unwrap();
    }
    let s = (x - nodes[k - 1]) / (nodes[k] - nodes[k - 1]);
    values[k - 1] * (1.0 - s) + values[k] * s
}

#[derive(Debug, Clone, Serialize)]
pub struct SurvivalPoint {
    pub t: f64,
    pub survivors: usize,
    pub fraction: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationEcho {
    pub interval: [f64; 2],
    pub boundary_rule: BoundaryRule,
    pub initial: String,
    pub dt: f64,
    pub steps: usize,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub bins: usize,
    pub bootstrap: usize,
}

/// Conditional (on survival to the horizon) histograms of one ensemble.
/// Bin masses sum to one; standard errors come from a Poisson bootstrap
/// over whole paths.
#[derive(Debug, Clone, Serialize)]
pub struct PathEnsembleSummary {
    pub config: SimulationEcho,
    pub survival_count: usize,
    pub effective_sample_size: f64,
    pub edges: Vec<f64>,
    /// Time-averaged occupation (1/t)∫_0^t δ_{X_s} ds.
    pub occupation: Vec<f64>,
    pub occupation_se: Vec<f64>,
    /// Law of X_t.
    pub terminal: Vec<f64>,
    pub terminal_se: Vec<f64>,
    pub survival: Vec<SurvivalPoint>,
    #[serde(skip)]
    pub occupation_replicates: Vec<Vec<f64>>,
    #[serde(skip)]
    pub terminal_replicates: Vec<Vec<f64>>,
}

struct Chunk {
    survivors: usize,
    alive_at: Vec<usize>,
    occupation: Vec<f64>,
    terminal: Vec<f64>,
    rep_weight: Vec<f64>,
    rep_occupation: Vec<f64>,
    rep_terminal: Vec<f64>,
}

impl Chunk {
    fn new(bins: usize, reps: usize, checkpoints: usize) -> Self {
        Chunk {
            survivors: 0,
            alive_at: vec![0; checkpoints],
            occupation: vec![0.0; bins],
            terminal: vec![0.0; bins],
            rep_weight: vec![0.0; reps],
            rep_occupation: vec![0.0; reps * bins],
            rep_terminal: vec![0.0; reps * bins],
        }
    }

    fn merge(&mut self, o: &Chunk) {
        self.survivors += o.survivors;
        add(&mut self.alive_at, &o.alive_at);
        addf(&mut self.occupation, &o.occupation);
        addf(&mut self.terminal, &o.terminal);
        addf(&mut self.rep_weight, &o.rep_weight);
        addf(&mut self.rep_occupation, &o.rep_occupation);
        addf(&mut self.rep_terminal, &o.rep_terminal);
    }
}

fn add(a: &mut [usize], b: &[usize]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn addf(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

struct Stepper<'a> {
    cfg: &'a SimulationConfig,
    a: f64,
    b: f64,
    dt: f64,
    steps: usize,
    checkpoint_steps: Vec<usize>,
}

impl Stepper<'_> {
    fn bin(&self, x: f64) -> usize {
        let n = self.cfg.bins;
        (((x - self.a) / (self.b - self.a) * n as f64) as usize).min(n - 1)
    }

    /// Runs one path into `occ` (unnormalized occupation) and returns the
    /// terminal position, or None if the path was killed.
    fn run(
        &self,
        rng: &mut ChaCha8Rng,
        x0: f64,
        occ: &mut [f64],
        chunk: &mut Chunk,
    ) -> Option<f64> {
        let pot = &self.cfg.domain.potential;
        let kill = self.cfg.boundary_rule == BoundaryRule::KillWithBridge;
        let sd = (2.0 * self.dt).sqrt();
        let mut x = x0;
        let mut next_cp = 0;
        let half = 0.5 * self.dt;
        for step in 1..=self.steps {
            let z: f64 = rng.sample(StandardNormal);
            let mut y = x + pot.derivative(x) * self.dt + sd * z;
            if kill {
                if y <= self.a || y >= self.b {
                    return None;
                }
                let p_stay = (1.0 - (-(x - self.a) * (y - self.a) / self.dt).exp())
                    * (1.0 - (-(self.b - x) * (self.b - y) / self.dt).exp());
                if p_stay < 1.0 && rng.random::<f64>() >= p_stay {
                    return None;
                }
            } else {
                y = fold(y, self.a, self.b);
            }
            occ[self.bin(x)] += half;
            occ[self.bin(y)] += half;
            x = y;
            while next_cp < self.checkpoint_steps.len() && self.checkpoint_steps[next_cp] == step {
                chunk.alive_at[next_cp] += 1;
                next_cp += 1;
            }
        }
        Some(x)
    }
}

/// Reflects y into [a, b].
fn fold(mut y: f64, a: f64, b: f64) -> f64 {
    loop {
        if y < a {
            y = 2.0 * a - y;
        } else if y > b {
            y = 2.0 * b - y;
        } else {
            return y;
        }
    }
}

/// Simulates the ensemble. Paths draw from independent ChaCha streams keyed
/// by (seed, path index) and chunks are merged in index order, so the
/// summary does not depend on the number of worker threads.
pub fn simulate(config: &SimulationConfig) -> Result<PathEnsembleSummary> {
    config.validate()?;
    let (a, b) = config.domain.interval_bounds().unwrap();
    let sampler = Sampler::new(&config.domain, &config.initial)?;
    let steps = config.steps();
    let dt = config.horizon / steps as f64;
    let stepper = Stepper {
        cfg: config,
        a,
        b,
        dt,
        steps,
        checkpoint_steps: {
            let mut s: Vec<usize> = config
                .checkpoints
                .iter()
                .map(|c| ((c / dt).round() as usize).clamp(1, steps))
                .collect();
            s.sort_unstable();
            s
        },
    };
    let (bins, reps) = (config.bins, config.bootstrap);
    let poisson = Poisson::new(1.0).unwrap();
    let n_chunks = config.n_paths.div_ceil(CHUNK);
    let chunks: Vec<Chunk> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Chunk::new(bins, reps, stepper.checkpoint_steps.len());
            let mut occ = vec![0.0; bins];
            let mut occ_rows = Vec::new();
            let mut weights = Vec::new();
            for p in c * CHUNK..((c + 1) * CHUNK).min(config.n_paths) {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(p as u64);
                let x0 = sampler.sample(rng.random::<f64>());
                occ.iter_mut().for_each(|v| *v = 0.0);
                let Some(xt) = stepper.run(&mut rng, x0, &mut occ, &mut acc) else {
                    continue;
                };
                occ.iter_mut().for_each(|v| *v /= config.horizon);
                acc.survivors += 1;
                addf(&mut acc.occupation, &occ);
                occ_rows.extend_from_slice(&occ);
                let k = stepper.bin(xt);
                acc.terminal[k] += 1.0;
                for r in 0..reps {
                    let wr: f64 = poisson.sample(&mut rng);
                    weights.push(wr);
                    acc.rep_weight[r] += wr;
                    acc.rep_terminal[r * bins + k] += wr;
                }
            }
            // Replicate occupations: (reps × s) weights times (s × bins) rows.
            let s = acc.survivors;
            if s > 0 && reps > 0 {
                let w = DMatrix::from_column_slice(reps, s, &weights);
                let o = DMatrix::from_row_slice(s, bins, &occ_rows);
                let r = w * o;
                for i in 0..reps {
                    for k in 0..bins {
                        acc.rep_occupation[i * bins + k] = r[(i, k)];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = Chunk::new(bins, reps, stepper.checkpoint_steps.len());
    for c in &chunks {
        total.merge(c);
    }
    let n = total.survivors;
    if n == 0 {
        return Err(Error::InsufficientSurvivors { got: 0, need: 1 });
    }
    let occupation = normalized(&total.occupation);
    let terminal: Vec<f64> = total.terminal.iter().map(|v| v / n as f64).collect();
    let replicates = |flat: &[f64]| -> Vec<Vec<f64>> {
        (0..reps)
            .filter(|r| total.rep_weight[*r] > 0.0)
            .map(|r| normalized(&flat[r * bins..(r + 1) * bins]))
            .collect()
    };
    let occupation_replicates = replicates(&total.rep_occupation);
    let terminal_replicates = replicates(&total.rep_terminal);
    let survival = config
        .checkpoints
        .iter()
        .map(|&t| {
            let s = ((t / dt).round() as usize).clamp(1, steps);
            let i = stepper
                .checkpoint_steps
                .iter()
                .position(|v| *v == s)
                .unwrap();
            let k = total.alive_at[i];
            let p = k as f64 / config.n_paths as f64;
            SurvivalPoint {
                t,
                survivors: k,
                fraction: p,
                standard_error: (p * (1.0 - p) / config.n_paths as f64).sqrt(),
            }
        })
        .collect();
    Ok(PathEnsembleSummary {
        config: SimulationEcho {
            interval: [a, b],
            boundary_rule: config.boundary_rule,
            initial: config.initial.describe(),
            dt,
            steps,
            horizon: config.horizon,
            n_paths: config.n_paths,
            seed: config.seed,
            bins,
            bootstrap: reps,
        },
        survival_count: n,
        effective_sample_size: n as f64,
        edges: (0..=bins)
            .map(|k| a + (b - a) * k as f64 / bins as f64)
            .collect(),
        occupation_se: bin_se(&occupation_replicates, bins),
        terminal_se: bin_se(&terminal_replicates, bins),
        occupation,
        terminal,
        survival,
        occupation_replicates,
        terminal_replicates,
    })
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

fn bin_se(reps: &[Vec<f64>], bins: usize) -> Vec<f64> {
    if reps.len() < 2 {
        return vec![f64::NAN; bins];
    }
    (0..bins)
        .map(|k| {
            let m = reps.iter().map(|r| r[k]).sum::<f64>() / reps.len() as f64;
            let v = reps.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;
            v.sqrt()
        })
        .collect()
}

/// Which of the two conditional estimands to read from an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    Occupation,
    Terminal,
}

impl PathEnsembleSummary {
    fn masses(&self, e: Estimand) -> (&[f64], &[Vec<f64>]) {
        match e {
            Estimand::Occupation => (&self.occupation, &self.occupation_replicates),
            Estimand::Terminal => (&self.terminal, &self.terminal_replicates),
        }
    }

    pub fn measure(&self, e: Estimand) -> Result<GridMeasure> {
        GridMeasure::histogram(self.edges.clone(), self.masses(e).0.to_vec())
    }

    fn replicate_measures(&self, e: Estimand) -> Result<Vec<GridMeasure>> {
        self.masses(e)
            .1
            .iter()
            .map(|m| GridMeasure::histogram(self.edges.clone(), m.clone()))
            .collect()
    }

    /// Bin densities (mass / width).
    pub fn density(&self, e: Estimand) -> Vec<f64> {
        let w = self.edges[1] - self.edges[0];
        self.masses(e).0.iter().map(|m| m / w).collect()
    }

    /// Bin centers, conditional occupation density and its standard error,
    /// then the same for the terminal law; the run configuration is echoed
    /// as `#` comment lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let echo = serde_json::to_value(&self.config).expect("echo serializes");
        if let Some(map) = echo.as_object() {
            for (k, v) in map {
                s.push_str(&format!("# {k}: {v}\n"));
            }
        }
        s.push_str(&format!("# survival_count: {}\n", self.survival_count));
        s.push_str("bin_center,occupation_density,occupation_se,terminal_density,terminal_se\n");
        let w = self.edges[1] - self.edges[0];
        for k in 0..self.occupation.len() {
            s.push_str(&format!(
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                0.5 * (self.edges[k] + self.edges[k + 1]),
                self.occupation[k] / w,
                self.occupation_se[k] / w,
                self.terminal[k] / w,
                self.terminal_se[k] / w
            ));
        }
        s
    }

    /// Weighted least-squares slope of log survival against time, with its
    /// standard error. Weights are the inverse binomial variances of log S.
    pub fn survival_slope(&self) -> Result<(f64, f64)> {
        let pts: Vec<&SurvivalPoint> = self.survival.iter().filter(|p| p.survivors > 0).collect();
        if pts.len() < 2 {
            return Err(Error::InsufficientSurvivors {
                got: pts.len(),
                need: 2,
            });
        }
        let n = self.config.n_paths as f64;
        let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in &pts {
            let w = p.fraction * n / (1.0 - p.fraction).max(1e-12);
            let y = p.fraction.ln();
            sw += w;
            st += w * p.t;
            sy += w * y;
            stt += w * p.t * p.t;
            sty += w * p.t * y;
        }
        let det = sw * stt - st * st;
        Ok(((sw * sty - st * sy) / det, (sw / det).sqrt()))
    }
}

/// 1-Wasserstein distance ∫|F − G| between two measures on an interval.
pub fn w1_distance(m1: &GridMeasure, m2: &GridMeasure) -> f64 {
    let (a1, b1) = m1.bounds();
    let (a2, b2) = m2.bounds();
    let (a, b) = (a1.min(a2), b1.max(b2));
    let n = 1 << 15;
    let h = (b - a) / n as f64;
    (0..n)
        .map(|k| {
            let x = a + (k as f64 + 0.5) * h;
            (m1.cdf(x) - m2.cdf(x)).abs()
        })
        .sum::<f64>()
        * h
}

/// A histogram distance together with its bootstrap error bars.
#[derive(Debug, Clone, Serialize)]
pub struct McDistance {
    pub value: f64,
    /// Standard deviation of the distance over bootstrap replicates.
    pub bootstrap_se: f64,
    /// Root mean square distance between replicates and the full-sample
    /// histogram: the size of the sampling error in the same metric.
    pub noise: f64,
    pub replicates: usize,
}

impl McDistance {
    fn from(value: f64, to_ref: &[f64], to_self: &[f64]) -> Self {
        let n = to_ref.len().max(1) as f64;
        let m = to_ref.iter().sum::<f64>() / n;
        let var = to_ref.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        McDistance {
            value,
            bootstrap_se: var.sqrt(),
            noise: (to_self.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            replicates: to_ref.len(),
        }
    }

    /// 3 standard errors plus the sampling-noise floor.
    pub fn tolerance(&self) -> f64 {
        3.0 * self.bootstrap_se + self.noise
    }
}

/// W1 between an ensemble histogram and a reference, with bootstrap bars.
pub fn histogram_w1(
    summary: &PathEnsembleSummary,
    e: Estimand,
    reference: &GridMeasure,
) -> Result<McDistance> {
    let hat = summary.measure(e)?;
    let reps = summary.replicate_measures(e)?;
    let to_ref: Vec<f64> = reps.par_iter().map(|r| w1_distance(r, reference)).collect();
    let to_self: Vec<f64> = reps.par_iter().map(|r| w1_distance(r, &hat)).collect();
    Ok(McDistance::from(
        w1_distance(&hat, reference),
        &to_ref,
        &to_self,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct McW2 {
    pub result: TransportResult,
    pub error_bars: McDistance,
    pub survival_count: usize,
}

/// W2 between the conditional occupation histogram of an ensemble and a
/// reference measure, with bootstrap error bars over paths.
pub fn ensemble_w2(summary: &PathEnsembleSummary, reference: &GridMeasure) -> Result<McW2> {
    if summary.survival_count < MIN_SURVIVORS {
        return Err(Error::InsufficientSurvivors {
            got: summary.survival_count,
            need: MIN_SURVIVORS,
        });
    }
    let hat = summary.measure(Estimand::Occupation)?;
    let result = w2_quantile_1d(&hat, reference, crate::transport::DEFAULT_QUANTILE_NODES)?;
    let reps = summary.replicate_measures(Estimand::Occupation)?;
    let pairs: Vec<(f64, f64)> = reps
        .par_iter()
        .map(|r| -> Result<(f64, f64)> {
            Ok((
                w2_quantile_1d(r, reference, REPLICATE_NODES)?.w2,
                w2_quantile_1d(r, &hat, REPLICATE_NODES)?.w2,
            ))
        })
        .collect::<Result<_>>()?;
    let (to_ref, to_self): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(McW2 {
        error_bars: McDistance::from(result.w2, &to_ref, &to_self),
        result,
        survival_count: summary.survival_count,
    })
}

/// Simulates and measures the conditional occupation against `reference`.
pub fn conditional_empirical_w2(
    config: &SimulationConfig,
    reference: &GridMeasure,
) -> Result<McW2> {
    ensemble_w2(&simulate(config)?, reference)
}
