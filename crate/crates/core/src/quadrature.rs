//! Gaussian quadrature rules.
//!
//! Nodes are found by Newton iteration on the orthonormal three-term
//! recurrences. Hermite nodes start from Sturm-sequence bisection on the
//! Jacobi matrix, which keeps high orders (several hundred) reliable.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

/// Gauss–Hermite rule in probabilists' form: `E_z[f(z)] ≈ Σ w_i f(z_i)` for
/// a standard Gaussian `z`. Weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Hermite order must be positive");
        let n = order;
        let mut x = alloc::vec![0.0; n];
        let mut w = alloc::vec![0.0; n];
        // π^{-1/4}
        let pim4 = 0.751_125_544_464_942_5;
        let nf = n as f64;
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut z = jacobi_eigenvalue(n, n - 1 - i);
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        // physicists' nodes/weights → standard normal
        let s2 = core::f64::consts::SQRT_2;
        let norm = PI.sqrt();
        let mut nodes: Vec<f64> = x.iter().map(|&v| v * s2).collect();
        let mut weights: Vec<f64> = w.iter().map(|&v| v / norm).collect();
        // ascending order
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(z)]`, summed in node order.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (&z, &w)| acc + w * f(z))
    }

    /// `log E[exp(f(z))]`.
    ///
    /// Values are centred at their quadrature mean, so the result keeps full
    /// relative precision in the cumulant correction even when `f` is tiny;
    /// widely spread values fall back to max subtraction.
    pub fn log_expect_exp<F: FnMut(f64) -> f64>(&self, mut f: F, buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend(self.nodes.iter().map(|&z| f(z)));
        let m = buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return m;
        }
        let mean = buf
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (&v, &w)| acc + w * v);
        if m - mean <= 30.0 {
            let s = buf
                .iter()
                .zip(&self.weights)
                .fold(0.0, |acc, (&v, &w)| acc + w * (v - mean).exp_m1());
            return mean + s.ln_1p();
        }
        let s = buf
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (&v, &w)| acc + w * (v - m).exp());
        m + s.ln()
    }
}

/// `index`-th smallest eigenvalue of the physicists' Hermite Jacobi matrix
/// (zero diagonal, off-diagonal `√(j/2)`), by Sturm-count bisection.
fn jacobi_eigenvalue(n: usize, index: usize) -> f64 {
    let below = |lambda: f64| {
        let mut count = 0;
        let mut d = -lambda;
        for j in 1..=n {
            if d < 0.0 {
                count += 1;
            }
            if j == n {
                break;
            }
            let b2 = j as f64 / 2.0;
            let prev = if d == 0.0 { f64::EPSILON } else { d };
            d = -lambda - b2 / prev;
        }
        count
    };
    let mut hi = (2.0 * n as f64).sqrt() + 1.0;
    let mut lo = -hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let nf = n as f64;
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_a^b f(t) dt`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (&t, &w)| acc + w * f(mid + half * t))
    }
}

/// Adaptive bisection on top of a fixed Gauss–Legendre rule. Stops when the
/// whole-interval and two-half estimates agree to `tol` or at `max_depth`.
pub fn adaptive_legendre<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
    f: &mut F,
) -> f64 {
    let whole = rule.integrate(a, b, &mut *f);
    refine(rule, a, b, whole, tol, max_depth, f)
}

fn refine<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    f: &mut F,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(a, mid, &mut *f);
    let right = rule.integrate(mid, b, &mut *f);
    if depth == 0 || (left + right - whole).abs() <= tol {
        return left + right;
    }
    refine(rule, a, mid, left, 0.5 * tol, depth - 1, f)
        + refine(rule, mid, b, right, 0.5 * tol, depth - 1, f)
}
