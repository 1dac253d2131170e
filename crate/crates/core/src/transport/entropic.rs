//! Debiased entropic optimal transport (log-domain Sinkhorn with ε-scaling),
//! bracketed by a c-transform dual bound and a rounded primal plan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridMeasure, Method, TransportResult};
use crate::error::{Error, Result};

pub const MAX_ENTROPIC_ATOMS: usize = 4096;

/// ε-scaling schedule. Values of ε are relative to the squared diameter of
/// the joint support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsSchedule {
    pub start: f64,
    pub factor: f64,
    pub target: f64,
    /// Sweeps allowed per ε stage. Stalled stages are not an error: the
    /// reported bracket width absorbs the unconverged marginals.
    pub max_sweeps: usize,
    /// L1 marginal violation accepted at the end of a stage.
    pub marginal_tol: f64,
    /// Cells used when a continuous 1D measure has to be atomized.
    pub atoms: usize,
    /// Final ε is at least this multiple of the squared median
    /// nearest-neighbour spacing; below that Sinkhorn stalls.
    pub spacing_floor: f64,
    /// Over-relaxation of the g-update, in [1, 2).
    pub relaxation: f64,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule {
            start: 1.0,
            factor: 0.5,
            target: 1e-6,
            max_sweeps: 200,
            marginal_tol: 1e-7,
            atoms: 256,
            spacing_floor: 0.1,
            relaxation: 1.5,
        }
    }
}

struct Cloud<'a> {
    dim: usize,
    x: &'a [f64],
    w: &'a [f64],
}

impl Cloud<'_> {
    fn len(&self) -> usize {
        self.w.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

fn sqdist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// −ε log Σ_j w_j exp((g_j − C(x, y_j))/ε).
fn soft_min(p: &[f64], ys: &Cloud, logw: &[f64], g: &[f64], eps: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for j in 0..ys.len() {
        let z = logw[j] + (g[j] - sqdist(p, ys.point(j))) / eps;
        best = best.max(z);
    }
    if best == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = (0..ys.len())
        .map(|j| (logw[j] + (g[j] - sqdist(p, ys.point(j))) / eps - best).exp())
        .sum();
    -eps * (best + s.ln())
}

fn logs(w: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        .collect()
}

struct Potentials {
    f: Vec<f64>,
    g: Vec<f64>,
    sweeps: usize,
    violation: f64,
}

/// Marginal violation Σ_j |b_j − Σ_i P_ij| after an f-update (rows exact).
fn column_violation(a: &Cloud, b: &Cloud, f: &[f64], g: &[f64], eps: f64) -> f64 {
    let la = logs(a.w);
    (0..b.len())
        .into_par_iter()
        .map(|j| {
            let q = b.point(j);
            let s: f64 = (0..a.len())
                .map(|i| (la[i] + (f[i] + g[j] - sqdist(a.point(i), q)) / eps).exp())
                .sum();
            (b.w[j] - b.w[j] * s).abs()
        })
        .sum()
}

fn sinkhorn(
    a: &Cloud,
    b: &Cloud,
    sched: &EpsSchedule,
    diam2: f64,
    target: f64,
    symmetric: bool,
) -> Potentials {
    let (la, lb) = (logs(a.w), logs(b.w));
    let mut f = vec![0.0; a.len()];
    let mut g = vec![0.0; b.len()];
    let mut eps = (sched.start * diam2).max(target);
    let mut sweeps = 0;
    let mut violation = f64::INFINITY;
    loop {
        let tol = if eps > target {
            sched.marginal_tol.max(1e-5)
        } else {
            sched.marginal_tol
        };
        for s in 0..sched.max_sweeps {
            if symmetric {
                let t: Vec<f64> = (0..a.len())
                    .into_par_iter()
                    .map(|i| soft_min(a.point(i), a, &la, &f, eps))
                    .collect();
                f.iter_mut().zip(&t).for_each(|(v, w)| *v = 0.5 * (*v + w));
                g.clone_from(&f);
            } else {
                let w = sched.relaxation;
                let ng: Vec<f64> = (0..b.len())
                    .into_par_iter()
                    .map(|j| soft_min(b.point(j), a, &la, &f, eps))
                    .collect();
                g.iter_mut()
                    .zip(&ng)
                    .for_each(|(v, n)| *v = (1.0 - w) * *v + w * n);
                f = (0..a.len())
                    .into_par_iter()
                    .map(|i| soft_min(a.point(i), b, &lb, &g, eps))
                    .collect();
            }
            sweeps += 1;
            if s % 5 == 4 || s + 1 == sched.max_sweeps {
                violation = column_violation(a, b, &f, &g, eps);
                if violation <= tol {
                    break;
                }
            }
        }
        if eps <= target {
            break;
        }
        eps = (eps * sched.factor).max(target);
    }
    Potentials {
        f,
        g,
        sweeps,
        violation,
    }
}

/// Dual bound from the c-transforms of f: g̃ = f^c, f̃ = g̃^c.
fn dual_lower(a: &Cloud, b: &Cloud, f: &[f64]) -> f64 {
    let gt: Vec<f64> = (0..b.len())
        .into_par_iter()
        .map(|j| {
            (0..a.len())
                .map(|i| sqdist(a.point(i), b.point(j)) - f[i])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let ft: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            (0..b.len())
                .map(|j| sqdist(a.point(i), b.point(j)) - gt[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    ft.iter().zip(a.w).map(|(v, w)| v * w).sum::<f64>()
        + gt.iter().zip(b.w).map(|(v, w)| v * w).sum::<f64>()
}

/// Cost of the entropic plan after rounding onto the exact marginals.
fn rounded_cost(a: &Cloud, b: &Cloud, f: &[f64], g: &[f64], eps: f64) -> f64 {
    let entry = |i: usize, j: usize| -> f64 {
        let c = sqdist(a.point(i), b.point(j));
        a.w[i] * b.w[j] * ((f[i] + g[j] - c) / eps).exp()
    };
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| (0..b.len()).map(|j| entry(i, j)).sum())
        .collect();
    let rs: Vec<f64> = rows
        .iter()
        .zip(a.w)
        .map(|(r, w)| if *r > 0.0 { (w / r).min(1.0) } else { 0.0 })
        .collect();
    let cols: Vec<f64> = (0..b.len())
        .into_par_iter()
        .map(|j| (0..a.len()).map(|i| rs[i] * entry(i, j)).sum())
        .collect();
    let cs: Vec<f64> = cols
        .iter()
        .zip(b.w)
        .map(|(c, w)| if *c > 0.0 { (w / c).min(1.0) } else { 0.0 })
        .collect();
    let (ea, cost): (Vec<f64>, Vec<f64>) = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let mut row = 0.0;
            let mut cst = 0.0;
            for j in 0..b.len() {
                let p = rs[i] * entry(i, j) * cs[j];
                row += p;
                cst += p * sqdist(a.point(i), b.point(j));
            }
            (a.w[i] - row, cst)
        })
        .unzip();
    let eb: Vec<f64> = (0..b.len())
        .into_par_iter()
        .map(|j| {
            b.w[j]
                - (0..a.len())
                    .map(|i| rs[i] * entry(i, j) * cs[j])
                    .sum::<f64>()
        })
        .collect();
    let mass: f64 = ea.iter().map(|v| v.max(0.0)).sum();
    let mut total: f64 = cost.iter().sum();
    if mass > 0.0 {
        let corr: f64 = (0..a.len())
            .into_par_iter()
            .map(|i| {
                (0..b.len())
                    .map(|j| ea[i].max(0.0) * eb[j].max(0.0) * sqdist(a.point(i), b.point(j)))
                    .sum::<f64>()
            })
            .sum();
        total += corr / mass;
    }
    total
}

/// Median squared distance from an atom to its nearest other atom.
fn spacing2(c: &Cloud) -> f64 {
    if c.len() < 2 {
        return 0.0;
    }
    let mut d: Vec<f64> = (0..c.len())
        .into_par_iter()
        .map(|i| {
            (0..c.len())
                .filter(|&j| j != i)
                .map(|j| sqdist(c.point(i), c.point(j)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

fn diameter2(a: &Cloud, b: &Cloud) -> f64 {
    let mut lo = vec![f64::INFINITY; a.dim];
    let mut hi = vec![f64::NEG_INFINITY; a.dim];
    for c in [a, b] {
        for i in 0..c.len() {
            for (k, v) in c.point(i).iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
    }
    lo.iter()
        .zip(&hi)
        .map(|(l, h)| (h - l).powi(2))
        .sum::<f64>()
        .max(1e-300)
}

/// Debiased Sinkhorn divergence S_ε(m1, m2) at the final ε of the schedule,
/// clamped into the bracket [dual lower bound, rounded primal cost]. The
/// error estimate is the bracket width plus the atomization error when a
/// continuous 1D measure had to be discretized.
pub fn w2_entropic(
    m1: &GridMeasure,
    m2: &GridMeasure,
    schedule: &EpsSchedule,
) -> Result<TransportResult> {
    if m1.dim() != m2.dim() {
        return Err(Error::InvalidArgument(
            "measures live in different dimensions".into(),
        ));
    }
    let (a1, e1) = atomic(m1, schedule.atoms)?;
    let (a2, e2) = atomic(m2, schedule.atoms)?;
    let (x1, w1) = a1.atom_data().unwrap();
    let (x2, w2) = a2.atom_data().unwrap();
    if w1.len() > MAX_ENTROPIC_ATOMS || w2.len() > MAX_ENTROPIC_ATOMS {
        return Err(Error::InvalidArgument(format!(
            "entropic solver supports at most {MAX_ENTROPIC_ATOMS} atoms per side"
        )));
    }
    let dim = m1.dim();
    let a = Cloud { dim, x: x1, w: w1 };
    let b = Cloud { dim, x: x2, w: w2 };
    let diam2 = diameter2(&a, &b);
    let eps =
        (schedule.target * diam2).max(schedule.spacing_floor * spacing2(&a).max(spacing2(&b)));
    let ab = sinkhorn(&a, &b, schedule, diam2, eps, false);
    let aa = sinkhorn(&a, &a, schedule, diam2, eps, true);
    let bb = sinkhorn(&b, &b, schedule, diam2, eps, true);
    let dual = |p: &Potentials, x: &Cloud, y: &Cloud| -> f64 {
        p.f.iter().zip(x.w).map(|(v, w)| v * w).sum::<f64>()
            + p.g.iter().zip(y.w).map(|(v, w)| v * w).sum::<f64>()
    };
    let sinkhorn_div = dual(&ab, &a, &b) - 0.5 * (dual(&aa, &a, &a) + dual(&bb, &b, &b));
    let lower = dual_lower(&a, &b, &ab.f).max(0.0);
    let upper = rounded_cost(&a, &b, &ab.f, &ab.g, eps);
    let gap = (upper - lower).max(0.0);
    // The bracket is valid for any potentials; only a useless one is an error.
    if !gap.is_finite() || !(ab.violation < 0.5) {
        return Err(Error::SolverNonConvergence {
            iterations: ab.sweeps,
            gap,
        });
    }
    let value = sinkhorn_div.clamp(lower, upper.max(lower));
    let atom = e1 + e2;
    let atom_err = atom * (2.0 * value.sqrt() + atom);
    let mut r = TransportResult::new(value, Method::Entropic, gap + atom_err);
    r.iterations = ab.sweeps;
    Ok(r)
}

fn atomic(m: &GridMeasure, n: usize) -> Result<(GridMeasure, f64)> {
    if m.is_atomic() {
        Ok((m.clone(), 0.0))
    } else {
        m.atomize(n)
    }
}
