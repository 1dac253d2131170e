//! Gauss–Legendre rules and small quadrature helpers.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

/// Nodes (ascending) and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = NonZeroUsize::new(n.max(1)).unwrap();
    let rule = GaussLegendre::new(n);
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&s| mid + half * s).collect(),
        w.iter().map(|&v| half * v).collect(),
    )
}

/// Levels of unconditional bisection before the error test is trusted; a
/// single panel can miss a boundary layer entirely and agree with its halves.
const MIN_LEVELS: u32 = 6;
const MAX_DEPTH: u32 = 40;

/// Adaptive 10-point Gauss–Legendre quadrature by interval bisection.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let (x, w) = gauss_legendre(10);
    fn panel<F: Fn(f64) -> f64>(f: &F, x: &[f64], w: &[f64], a: f64, b: f64) -> f64 {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        x.iter()
            .zip(w)
            .map(|(&s, &wi)| wi * f(m + h * s))
            .sum::<f64>()
            * h
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        x: &[f64],
        w: &[f64],
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let l = panel(f, x, w, a, m);
        let r = panel(f, x, w, m, b);
        if depth == 0 || (depth <= MAX_DEPTH - MIN_LEVELS && (l + r - whole).abs() <= tol) {
            return l + r;
        }
        rec(f, x, w, a, m, l, 0.5 * tol, depth - 1) + rec(f, x, w, m, b, r, 0.5 * tol, depth - 1)
    }
    let whole = panel(f, &x, &w, a, b);
    rec(f, &x, &w, a, b, whole, tol, MAX_DEPTH)
}
