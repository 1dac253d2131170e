//! Exact optimal transport between finite atomic measures by the
//! transportation simplex (u–v potentials on a spanning-tree basis).

use std::collections::VecDeque;

use super::{Coupling, Method, TransportResult};
use crate::error::{Error, Result};

pub const MAX_EXACT_ATOMS: usize = 512;
const MASS_MISMATCH: f64 = 1e-10;

/// Exact W2 between atoms on the line.
pub fn w2_exact_discrete(
    support1: &[f64],
    weights1: &[f64],
    support2: &[f64],
    weights2: &[f64],
) -> Result<TransportResult> {
    w2_exact_points(1, support1, weights1, support2, weights2)
}

/// Exact W2 between point clouds in `dim` dimensions (row-major points).
pub fn w2_exact_points(
    dim: usize,
    support1: &[f64],
    weights1: &[f64],
    support2: &[f64],
    weights2: &[f64],
) -> Result<TransportResult> {
    let (n, m) = (weights1.len(), weights2.len());
    if n == 0 || m == 0 || support1.len() != dim * n || support2.len() != dim * m {
        return Err(Error::InvalidArgument(
            "support/weight sizes do not match".into(),
        ));
    }
    if n > MAX_EXACT_ATOMS || m > MAX_EXACT_ATOMS {
        return Err(Error::InvalidArgument(format!(
            "exact solver supports at most {MAX_EXACT_ATOMS} atoms per side"
        )));
    }
    if weights1.iter().chain(weights2).any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be nonnegative".into()));
    }
    let (sa, sb): (f64, f64) = (weights1.iter().sum(), weights2.iter().sum());
    if (sa - sb).abs() > MASS_MISMATCH {
        return Err(Error::InfeasibleMarginals((sa - sb).abs()));
    }
    let cost = |i: usize, j: usize| -> f64 {
        (0..dim)
            .map(|k| (support1[i * dim + k] - support2[j * dim + k]).powi(2))
            .sum()
    };
    let b: Vec<f64> = weights2.iter().map(|w| w * sa / sb).collect();
    let mut s = Simplex::new(n, m, weights1, &b, &cost);
    let iterations = s.solve(&cost)?;
    let mut plan = Coupling::default();
    let mut total = 0.0;
    let mut scale: f64 = 0.0;
    for cell in &s.basis {
        if cell.flow > 0.0 {
            plan.rows.push(cell.i);
            plan.cols.push(cell.j);
            plan.mass.push(cell.flow);
            total += cell.flow * cost(cell.i, cell.j);
        }
        scale = scale.max(cost(cell.i, cell.j));
    }
    let mut r = TransportResult::new(total, Method::ExactDiscrete, 1e-13 * scale.max(1e-300));
    r.plan = Some(plan);
    r.iterations = iterations;
    Ok(r)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    i: usize,
    j: usize,
    flow: f64,
}

struct Simplex {
    n: usize,
    m: usize,
    basis: Vec<Cell>,
    /// Basic cells incident to row i (index < n) or column j (index n + j).
    adj: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
    tol: f64,
}

impl Simplex {
    /// North-west corner start: exactly n + m − 1 basic cells.
    fn new(n: usize, m: usize, a: &[f64], b: &[f64], cost: &dyn Fn(usize, usize) -> f64) -> Self {
        let (mut sa, mut sb) = (a.to_vec(), b.to_vec());
        let (mut i, mut j) = (0, 0);
        let mut basis = Vec::with_capacity(n + m - 1);
        let mut cmax: f64 = 0.0;
        loop {
            let f = sa[i].min(sb[j]).max(0.0);
            basis.push(Cell { i, j, flow: f });
            cmax = cmax.max(cost(i, j));
            sa[i] -= f;
            sb[j] -= f;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if j == m - 1 || (i < n - 1 && sa[i] <= sb[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut adj = vec![Vec::new(); n + m];
        for (k, c) in basis.iter().enumerate() {
            adj[c.i].push(k);
            adj[n + c.j].push(k);
        }
        for i in 0..n {
            for j in 0..m {
                cmax = cmax.max(cost(i, j));
            }
        }
        Simplex {
            n,
            m,
            basis,
            adj,
            u: vec![0.0; n],
            v: vec![0.0; m],
            tol: 1e-13 * cmax.max(1e-300),
        }
    }

    fn potentials(&mut self, cost: &dyn Fn(usize, usize) -> f64) {
        let n = self.n;
        let mut seen = vec![false; n + self.m];
        let mut queue = VecDeque::new();
        self.u[0] = 0.0;
        seen[0] = true;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &k in &self.adj[node] {
                let c = self.basis[k];
                let (other, value) = if node < n {
                    (n + c.j, cost(c.i, c.j) - self.u[c.i])
                } else {
                    (c.i, cost(c.i, c.j) - self.v[c.j])
                };
                if !seen[other] {
                    seen[other] = true;
                    if other < n {
                        self.u[other] = value;
                    } else {
                        self.v[other - n] = value;
                    }
                    queue.push_back(other);
                }
            }
        }
        debug_assert!(seen.iter().all(|s| *s));
    }

    /// Basic-cell path from row node `p` to column node `n + q`.
    fn tree_path(&self, p: usize, q: usize) -> Vec<usize> {
        let total = self.n + self.m;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        let target = self.n + q;
        let mut queue = VecDeque::new();
        seen[p] = true;
        queue.push_back(p);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &k in &self.adj[node] {
                let c = self.basis[k];
                let other = if node < self.n { self.n + c.j } else { c.i };
                if !seen[other] {
                    seen[other] = true;
                    parent[other] = Some((node, k));
                    queue.push_back(other);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while node != p {
            let (prev, k) = parent[node].expect("basis is a spanning tree");
            path.push(k);
            node = prev;
        }
        // path[0] touches column q; signs alternate −, +, −, … from there.
        path
    }

    fn solve(&mut self, cost: &dyn Fn(usize, usize) -> f64) -> Result<usize> {
        let (n, m) = (self.n, self.m);
        let cells = n * m;
        let block = ((cells as f64).sqrt() as usize).max(64).min(cells);
        let mut cursor = 0usize;
        let mut degenerate = 0usize;
        let bland_after = 50 * (n + m);
        let max_pivots = 200 * (n + m) * (n + m).max(64);
        for iter in 0..max_pivots {
            self.potentials(cost);
            let bland = degenerate > bland_after;
            let entering = if bland {
                (0..cells).find(|&k| self.reduced(k, cost) < -self.tol)
            } else {
                self.price_block(cursor, block, cost)
            };
            let Some(k) = entering else {
                return Ok(iter);
            };
            cursor = (k + 1) % cells;
            let (p, q) = (k / m, k % m);
            let path = self.tree_path(p, q);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for (pos, &e) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    let c = self.basis[e];
                    let key = c.i * m + c.j;
                    let better = c.flow < theta
                        || (c.flow == theta
                            && leave != usize::MAX
                            && key < self.basis[leave].i * m + self.basis[leave].j);
                    if better {
                        theta = c.flow;
                        leave = e;
                    }
                }
            }
            if theta <= 0.0 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for (pos, &e) in path.iter().enumerate() {
                let c = &mut self.basis[e];
                if pos % 2 == 0 {
                    c.flow = (c.flow - theta).max(0.0);
                } else {
                    c.flow += theta;
                }
            }
            let old = self.basis[leave];
            self.adj[old.i].retain(|&x| x != leave);
            self.adj[n + old.j].retain(|&x| x != leave);
            self.basis[leave] = Cell {
                i: p,
                j: q,
                flow: theta,
            };
            self.adj[p].push(leave);
            self.adj[n + q].push(leave);
        }
        Err(Error::SolverNonConvergence {
            iterations: max_pivots,
            gap: f64::NAN,
        })
    }

    fn reduced(&self, k: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
        let (i, j) = (k / self.m, k % self.m);
        cost(i, j) - self.u[i] - self.v[j]
    }

    /// Most negative reduced cost in the first block (from `start`, cyclic)
    /// that contains a negative one.
    fn price_block(
        &self,
        start: usize,
        block: usize,
        cost: &dyn Fn(usize, usize) -> f64,
    ) -> Option<usize> {
        let cells = self.n * self.m;
        let mut scanned = 0;
        let mut k = start;
        while scanned < cells {
            let mut best = -self.tol;
            let mut arg = None;
            let end = (scanned + block).min(cells);
            while scanned < end {
                let r = self.reduced(k, cost);
                if r < best {
                    best = r;
                    arg = Some(k);
                }
                k += 1;
                if k == cells {
                    k = 0;
                }
                scanned += 1;
            }
            if arg.is_some() {
                return arg;
            }
        }
        None
    }
}
