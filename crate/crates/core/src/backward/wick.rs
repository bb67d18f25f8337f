//! Gaussian interpolation oracle.
//!
//! For `κ ~ N(0, C(t))` and `φ(κ) = log Σ_a w_a e^{ψ(κ_a)}`,
//! `d/dt E φ = ½ Σ_{ab} C′_ab(t) E[∂_a∂_b φ]`, with
//! `∂_a∂_b φ = δ_ab p_a (ψ″ + ψ′²)(κ_a) − p_a p_b ψ′(κ_a) ψ′(κ_b)`
//! and `p_a` the Gibbs weights. Expectations are tensor Gauss–Hermite sums.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

use crate::parisi::BoundaryFunction;
use crate::quadrature::GaussHermite;
use crate::{Error, Result};

/// Largest dimension accepted by the tensor rule.
pub const MAX_DIMENSION: usize = 4;

/// Pivoted Cholesky factor `L` (`n × r`, column-major by rank) with
/// `C = L Lᵀ`.
fn pivoted_cholesky(c: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = c.len();
    let scale = (0..n)
        .map(|i| c[i][i].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let tol = 1e-12 * scale;
    for (i, row) in c.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidParameter("covariance must be square".into()));
        }
        for j in 0..i {
            if (row[j] - c[j][i]).abs() > tol {
                return Err(Error::InvalidParameter(
                    "covariance must be symmetric".into(),
                ));
            }
        }
    }
    let mut diag: Vec<f64> = (0..n).map(|i| c[i][i]).collect();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut used = alloc::vec![false; n];
    loop {
        let (p, d) = (0..n).filter(|&i| !used[i]).map(|i| (i, diag[i])).fold(
            (usize::MAX, f64::NEG_INFINITY),
            |b, v| if v.1 > b.1 { v } else { b },
        );
        if p == usize::MAX || d <= tol {
            if diag.iter().any(|&v| v < -tol) {
                return Err(Error::NotPositiveSemiDefinite);
            }
            // every remaining Schur complement entry must vanish too
            for i in (0..n).filter(|&i| !used[i]) {
                for j in (0..n).filter(|&j| !used[j]) {
                    let s: f64 = cols.iter().map(|l| l[i] * l[j]).sum();
                    if (c[i][j] - s).abs() > 1e-9 * scale {
                        return Err(Error::NotPositiveSemiDefinite);
                    }
                }
            }
            return Ok(cols);
        }
        used[p] = true;
        let root = d.sqrt();
        let mut col = alloc::vec![0.0; n];
        col[p] = root;
        for i in (0..n).filter(|&i| !used[i]) {
            let s: f64 = cols.iter().map(|l| l[i] * l[p]).sum();
            col[i] = (c[i][p] - s) / root;
            diag[i] -= col[i] * col[i];
        }
        cols.push(col);
    }
}

/// `E f(κ)` for `κ ~ N(0, cov)` with a tensor Gauss–Hermite rule of the
/// given order per dimension.
pub fn gaussian_expectation<F: FnMut(&[f64]) -> f64>(
    cov: &[Vec<f64>],
    order: usize,
    mut f: F,
) -> Result<f64> {
    let n = cov.len();
    if n == 0 || n > MAX_DIMENSION {
        return Err(Error::TooLarge("dimension", MAX_DIMENSION));
    }
    let cols = pivoted_cholesky(cov)?;
    let gh = GaussHermite::new(order);
    let r = cols.len();
    let mut idx = alloc::vec![0usize; r];
    let mut kappa = alloc::vec![0.0; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        kappa.iter_mut().for_each(|v| *v = 0.0);
        for (d, &j) in idx.iter().enumerate() {
            w *= gh.weights()[j];
            let z = gh.nodes()[j];
            for (k, v) in kappa.iter_mut().enumerate() {
                *v += cols[d][k] * z;
            }
        }
        total += w * f(&kappa);
        // odometer
        let mut d = 0;
        loop {
            if d == r {
                return Ok(total);
            }
            idx[d] += 1;
            if idx[d] < order {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn gibbs(weights: &[f64], psi: &BoundaryFunction, kappa: &[f64]) -> (f64, Vec<f64>) {
    let e: Vec<f64> = kappa.iter().map(|&k| psi.value(k)).collect();
    let top = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = weights
        .iter()
        .zip(&e)
        .map(|(w, v)| w * (v - top).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    (top + z.ln(), raw.into_iter().map(|v| v / z).collect())
}

/// `E log Σ_a w_a e^{ψ(κ_a)}` for `κ ~ N(0, cov)`.
pub fn log_partition_expectation(
    cov: &[Vec<f64>],
    weights: &[f64],
    psi: &BoundaryFunction,
    order: usize,
) -> Result<f64> {
    check_weights(cov, weights)?;
    gaussian_expectation(cov, order, |k| gibbs(weights, psi, k).0)
}

fn check_weights(cov: &[Vec<f64>], weights: &[f64]) -> Result<()> {
    if weights.len() != cov.len() || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter(
            "need one positive weight per coordinate".into(),
        ));
    }
    Ok(())
}

/// `½ Σ_ab C′_ab(t) E[∂_a∂_b φ]` at `t`.
pub fn wick_derivative_oracle<C, D>(
    cov: C,
    dcov: D,
    t: f64,
    weights: &[f64],
    psi: &BoundaryFunction,
    order: usize,
) -> Result<f64>
where
    C: Fn(f64) -> Vec<Vec<f64>>,
    D: Fn(f64) -> Vec<Vec<f64>>,
{
    let c = cov(t);
    let dc = dcov(t);
    check_weights(&c, weights)?;
    let n = c.len();
    gaussian_expectation(&c, order, |k| {
        let (_, p) = gibbs(weights, psi, k);
        let u: Vec<f64> = k.iter().map(|&v| psi.first(v)).collect();
        let mut s = 0.0;
        for a in 0..n {
            let v = psi.second(k[a]) + u[a] * u[a];
            s += dc[a][a] * p[a] * v;
            for b in 0..n {
                s -= dc[a][b] * p[a] * p[b] * u[a] * u[b];
            }
        }
        0.5 * s
    })
}
