//! Gauss–Legendre rules and composite integration over explicit breakpoints.
//!
//! Every integrand in this crate is smooth between a known, finite set of
//! breakpoints (shape switches, kernel knots, quantizer sample edges), so the
//! composite rule never needs adaptivity: callers hand over the cell edges and
//! each cell gets a fixed-order rule.

use std::f64::consts::PI;

use crate::error::QuadratureError;

/// Largest supported node count.
pub const MAX_POINTS: usize = 16;

/// An `n`-point Gauss–Legendre rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(points: usize) -> Result<Self, QuadratureError> {
        if points == 0 || points > MAX_POINTS {
            return Err(QuadratureError::UnsupportedPointCount(points));
        }
        let n = points;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // Roots are symmetric; solve for the positive half with Newton on P_n.
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn points(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over `[a, b]` with a single application of the rule.
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        if half == 0.0 {
            return 0.0;
        }
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Sums the rule over consecutive pairs of `edges`, which must be sorted.
    ///
    /// Cells wider than `max_width` are split into equal sub-cells.
    pub fn composite<F: FnMut(f64) -> f64>(&self, mut f: F, edges: &[f64], max_width: f64) -> f64 {
        let mut total = 0.0;
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let width = b - a;
            if width <= 0.0 {
                continue;
            }
            let pieces = if max_width.is_finite() && max_width > 0.0 {
                (width / max_width).ceil().max(1.0) as usize
            } else {
                1
            };
            if pieces == 1 {
                total += self.integrate(&mut f, a, b);
            } else {
                let h = width / pieces as f64;
                for p in 0..pieces {
                    let lo = a + h * p as f64;
                    let hi = if p + 1 == pieces { b } else { a + h * (p + 1) as f64 };
                    total += self.integrate(&mut f, lo, hi);
                }
            }
        }
        total
    }

    /// Like [`composite`](Self::composite) for an integrand with two outputs
    /// that share evaluation cost.
    pub fn composite_pair<F: FnMut(f64) -> (f64, f64)>(
        &self,
        mut f: F,
        edges: &[f64],
        max_width: f64,
    ) -> (f64, f64) {
        let mut total = (0.0, 0.0);
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let width = b - a;
            if width <= 0.0 {
                continue;
            }
            let pieces = if max_width.is_finite() && max_width > 0.0 {
                (width / max_width).ceil().max(1.0) as usize
            } else {
                1
            };
            let h = width / pieces as f64;
            for p in 0..pieces {
                let lo = a + h * p as f64;
                let hi = if p + 1 == pieces { b } else { a + h * (p + 1) as f64 };
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                let mut acc = (0.0, 0.0);
                for (x, w) in self.nodes.iter().zip(&self.weights) {
                    let (u, v) = f(mid + half * x);
                    acc.0 += w * u;
                    acc.1 += w * v;
                }
                total.0 += acc.0 * half;
                total.1 += acc.1 * half;
            }
        }
        total
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
