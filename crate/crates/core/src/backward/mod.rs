//! The backward (tilted) field and the derivatives of the Parisi functional.
//!
//! Along a single branch the backward field `κ̃(q)` is a Gaussian process
//! reweighted at every level by `exp(x_l[ψ_{q_{l+1}}(κ(q_{l+1})) − ψ_{q_l}(κ(q_l))])`.
//! Its marginal at `q_l` is stored as `ρ_l(y) = N(y; 0, g(q_l)) · f_l(y)`,
//! where `f` obeys the Brownian-bridge recursion
//!
//! ```text
//! f_{l+1}(y) = e^{x_l ψ_{l+1}(y)} E[f_l(Y) e^{−x_l ψ_l(Y)}],
//! Y ~ N(y g_l / g_{l+1}, g_l (g_{l+1} − g_l) / g_{l+1}),
//! ```
//!
//! which keeps every expectation a Gauss–Hermite sum against `N(0, g(q_l))`.
//! The conditional mean `m_l(y) = E[ψ′(κ̃(1)) | κ̃(q_l) = y]` is propagated
//! backwards from `m_{K+1} = ψ′`.

mod tree;
mod wick;

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

use crate::grid::GridFunction;
use crate::parisi::PsiSolution;
use crate::quadrature::{adaptive_legendre, GaussLegendre};
use crate::{Error, Result};

pub use tree::{
    chain_probability, enumerate_chains, second_q_derivative, second_q_derivative_sk,
    tree_expectation, LeafFunction, OverlapEvent,
};
pub use wick::{gaussian_expectation, log_partition_expectation, wick_derivative_oracle};

/// Marginal density and conditional mean of the backward field at one `q`,
/// sampled on the solution grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedDensity {
    pub q: f64,
    /// `g(q)`; zero means `ρ` is the point mass at 0.
    pub variance: f64,
    pub ys: Vec<f64>,
    pub rho: Vec<f64>,
    pub m: Vec<f64>,
}

impl TiltedDensity {
    pub fn is_point_mass(&self) -> bool {
        self.variance == 0.0
    }

    /// Trapezoidal `∫ ρ`.
    pub fn integral(&self) -> f64 {
        if self.is_point_mass() {
            return 1.0;
        }
        trapezoid(&self.ys, &self.rho)
    }

    /// Trapezoidal `∫ ρ m²`.
    pub fn overlap_moment(&self) -> f64 {
        if self.is_point_mass() {
            let j =
                self.ys.iter().enumerate().fold(
                    0,
                    |b, (j, y)| {
                        if y.abs() < self.ys[b].abs() {
                            j
                        } else {
                            b
                        }
                    },
                );
            return self.m[j] * self.m[j];
        }
        let v: Vec<f64> = self
            .rho
            .iter()
            .zip(&self.m)
            .map(|(r, m)| r * m * m)
            .collect();
        trapezoid(&self.ys, &v)
    }
}

fn trapezoid(ys: &[f64], v: &[f64]) -> f64 {
    let h = ys[1] - ys[0];
    let inner: f64 = v[1..v.len() - 1].iter().sum();
    h * (inner + 0.5 * (v[0] + v[v.len() - 1]))
}

fn normal_pdf(y: f64, var: f64) -> f64 {
    (-0.5 * y * y / var).exp() / (2.0 * core::f64::consts::PI * var).sqrt()
}

/// Backward-field grids for every level of a [`PsiSolution`].
#[derive(Debug, Clone)]
pub struct BackwardField<'a> {
    sol: &'a PsiSolution,
    /// `log f_l` for `l = 0..=K+1`; `None` where `g(q_l) = 0`.
    log_f: Vec<Option<GridFunction>>,
    /// `m_l` for `l = 0..=K`.
    m: Vec<GridFunction>,
}

impl<'a> BackwardField<'a> {
    pub fn new(sol: &'a PsiSolution) -> Result<Self> {
        let k = sol.depth();
        let gs = sol.g_values();
        let xs = sol.exponents();
        let gh = sol.gauss_hermite();
        let grid = *sol.spatial_grid();
        let mut buf = Vec::new();

        let mut log_f: Vec<Option<GridFunction>> = Vec::with_capacity(k + 2);
        log_f.push(None);
        for l in 0..=k {
            let next = if gs[l + 1] <= 0.0 {
                None
            } else if gs[l] <= 0.0 {
                let p0 = sol.psi(l, 0.0);
                Some(GridFunction::from_fn(
                    grid,
                    |y| xs[l] * (sol.psi(l + 1, y) - p0),
                    None,
                ))
            } else if gs[l + 1] - gs[l] <= 0.0 {
                log_f[l].clone()
            } else {
                let prev = log_f[l].as_ref().expect("positive variance level");
                let a = gs[l] / gs[l + 1];
                let s = (gs[l] * (gs[l + 1] - gs[l]) / gs[l + 1]).sqrt();
                let values: Vec<f64> = grid
                    .nodes()
                    .map(|y| {
                        let inner = gh.log_expect_exp(
                            |z| {
                                let u = a * y + s * z;
                                prev.eval(u) - xs[l] * sol.psi(l, u)
                            },
                            &mut buf,
                        );
                        xs[l] * sol.psi(l + 1, y) + inner
                    })
                    .collect();
                Some(GridFunction::new(grid, values, None))
            };
            if let Some(f) = &next {
                if f.values().iter().any(|v| !v.is_finite()) {
                    return Err(Error::QuadratureOverflow { level: l + 1 });
                }
            }
            log_f.push(next);
        }

        let mut m: Vec<Option<GridFunction>> = alloc::vec![None; k + 1];
        for l in (0..=k).rev() {
            let values: Vec<f64> = grid
                .nodes()
                .map(|y| {
                    let upper = |u: f64| {
                        if l == k {
                            sol.boundary().first(u)
                        } else {
                            m[l + 1].as_ref().expect("solved").eval(u)
                        }
                    };
                    tilted_mean(sol, l, y, (gs[l + 1] - gs[l]).max(0.0).sqrt(), &upper)
                })
                .collect();
            m[l] = Some(GridFunction::new(grid, values, None));
        }
        Ok(Self {
            sol,
            log_f,
            m: m.into_iter().map(|g| g.expect("solved")).collect(),
        })
    }

    pub fn solution(&self) -> &PsiSolution {
        self.sol
    }

    /// `m_l(y)` for `l = 0..=K+1`.
    pub fn m(&self, l: usize, y: f64) -> f64 {
        if l == self.m.len() {
            self.sol.boundary().first(y)
        } else {
            self.m[l].eval(y)
        }
    }

    /// `E_{ρ_l}[h]` for `l = 0..=K+1`.
    pub fn expect<H: Fn(f64) -> f64>(&self, l: usize, h: H) -> f64 {
        match &self.log_f[l] {
            None => h(0.0),
            Some(lf) => {
                let s = self.sol.g_values()[l].sqrt();
                self.sol
                    .gauss_hermite()
                    .expect(|z| lf.eval(s * z).exp() * h(s * z))
            }
        }
    }

    /// `E_{ρ_l}[m_l²]`, the conditional overlap moment
    /// `E[ψ′(κ̃_1)ψ′(κ̃_2) | q_12 = q_l]`.
    pub fn overlap_moment(&self, l: usize) -> f64 {
        self.expect(l, |y| {
            let v = self.m(l, y);
            v * v
        })
    }

    /// `E_{ρ_r}[m_r²]` at an arbitrary `r`, with `r` treated as a level of
    /// zero mass inside `[q_i, q_{i+1}]`.
    pub fn inserted_overlap_moment(&self, r: f64) -> f64 {
        let sol = self.sol;
        let i = sol.interval_of(r);
        if (sol.positions()[i] - r).abs() <= crate::measures::POSITION_TOL {
            return self.overlap_moment(i);
        }
        let point = Inserted::new(self, i, r);
        let gr = point.g_r;
        if gr <= 0.0 {
            let v = point.m(0.0);
            return v * v;
        }
        let s = gr.sqrt();
        let mut buf = Vec::new();
        sol.gauss_hermite().expect(|z| {
            let y = s * z;
            let v = point.m(y);
            point.log_f(y, &mut buf).exp() * v * v
        })
    }

    /// Marginal density and conditional mean at `q` (a level or any point).
    pub fn tilted_density(&self, q: f64) -> Result<TiltedDensity> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::PositionOutOfRange(q));
        }
        let sol = self.sol;
        let grid = *sol.spatial_grid();
        let ys: Vec<f64> = grid.nodes().collect();
        let level = if q >= 1.0 {
            Some(sol.depth() + 1)
        } else {
            sol.level_of(q).or(if q == 0.0 { Some(0) } else { None })
        };
        let variance = sol.covariance().g(q);
        let mut buf = Vec::new();
        let (log_f, m): (Vec<f64>, Vec<f64>) = match level {
            Some(l) => ys
                .iter()
                .map(|&y| {
                    (
                        self.log_f[l].as_ref().map_or(0.0, |f| f.eval(y)),
                        self.m(l, y),
                    )
                })
                .unzip(),
            None => {
                let point = Inserted::new(self, sol.interval_of(q), q);
                ys.iter()
                    .map(|&y| (point.log_f(y, &mut buf), point.m(y)))
                    .unzip()
            }
        };
        let rho = if variance > 0.0 {
            ys.iter()
                .zip(&log_f)
                .map(|(&y, lf)| normal_pdf(y, variance) * lf.exp())
                .collect()
        } else {
            alloc::vec![0.0; ys.len()]
        };
        Ok(TiltedDensity {
            q,
            variance,
            ys,
            rho,
            m,
        })
    }
}

/// Self-normalized tilted average of `upper` over one level step from `y`.
fn tilted_mean<F: Fn(f64) -> f64>(
    sol: &PsiSolution,
    l: usize,
    y: f64,
    sigma: f64,
    upper: &F,
) -> f64 {
    tilted_mean_from(sol, l, sol.exponents()[l], y, sigma, upper)
}

fn tilted_mean_from<F: Fn(f64) -> f64>(
    sol: &PsiSolution,
    l: usize,
    exponent: f64,
    y: f64,
    sigma: f64,
    upper: &F,
) -> f64 {
    if sigma == 0.0 {
        return upper(y);
    }
    let gh = sol.gauss_hermite();
    if exponent == 0.0 {
        return gh.expect(|z| upper(y + sigma * z));
    }
    let top = gh
        .nodes()
        .iter()
        .map(|&z| exponent * sol.psi(l + 1, y + sigma * z))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (&z, &w) in gh.nodes().iter().zip(gh.weights()) {
        let u = y + sigma * z;
        let t = w * (exponent * sol.psi(l + 1, u) - top).exp();
        num += t * upper(u);
        den += t;
    }
    num / den
}

/// A zero-mass level at `r ∈ (q_i, q_{i+1})`.
struct Inserted<'b, 'a> {
    field: &'b BackwardField<'a>,
    i: usize,
    g_r: f64,
    up_sigma: f64,
}

impl<'b, 'a> Inserted<'b, 'a> {
    fn new(field: &'b BackwardField<'a>, i: usize, r: f64) -> Self {
        let gs = field.sol.g_values();
        let g_r = field.sol.covariance().g(r);
        Self {
            field,
            i,
            g_r,
            up_sigma: (gs[i + 1] - g_r).max(0.0).sqrt(),
        }
    }

    fn m(&self, y: f64) -> f64 {
        let f = self.field;
        let i = self.i;
        tilted_mean_from(f.sol, i, f.sol.exponents()[i], y, self.up_sigma, &|u| {
            f.m(i + 1, u)
        })
    }

    fn log_f(&self, y: f64, buf: &mut Vec<f64>) -> f64 {
        let sol = self.field.sol;
        let (i, gs) = (self.i, sol.g_values());
        let x = sol.exponents()[i];
        let gh = sol.gauss_hermite();
        // x_i ψ_r(y)
        let tilt_r = if x == 0.0 {
            0.0
        } else if self.up_sigma == 0.0 {
            x * sol.psi(i + 1, y)
        } else {
            gh.log_expect_exp(|z| x * sol.psi(i + 1, y + self.up_sigma * z), buf)
        };
        if gs[i] <= 0.0 {
            return tilt_r - x * sol.psi(i, 0.0);
        }
        let prev = self.field.log_f[i]
            .as_ref()
            .expect("positive variance level");
        if self.g_r - gs[i] <= 0.0 {
            return prev.eval(y);
        }
        let a = gs[i] / self.g_r;
        let s = (gs[i] * (self.g_r - gs[i]) / self.g_r).sqrt();
        let inner = gh.log_expect_exp(
            |z| {
                let u = a * y + s * z;
                prev.eval(u) - x * sol.psi(i, u)
            },
            buf,
        );
        tilt_r + inner
    }
}

/// Forward marginal of the backward field at `q` (the `ρ` part).
pub fn forward_density(sol: &PsiSolution, q: f64) -> Result<TiltedDensity> {
    BackwardField::new(sol)?.tilted_density(q)
}

/// Conditional mean `m_q(y) = E[ψ′(κ̃(1)) | κ̃(q) = y]` (the `m` part).
pub fn conditional_mean(sol: &PsiSolution, q: f64) -> Result<TiltedDensity> {
    forward_density(sol, q)
}

/// `∂_{q_l} P = −(g′(q_l)/2)(x_l − x_{l−1}) E_{ρ_l}[m_l²]`, `l = 1..=K`.
pub fn q_derivative(field: &BackwardField<'_>, l: usize) -> Result<f64> {
    let sol = field.solution();
    let k = sol.depth();
    if l == 0 || l > k {
        return Err(Error::IndexOutOfRange {
            index: l,
            lo: 1,
            hi: k,
        });
    }
    let xs = sol.exponents();
    let gp = sol.covariance().g_prime(sol.positions()[l]);
    Ok(-0.5 * gp * (xs[l] - xs[l - 1]) * field.overlap_moment(l))
}

/// `∂_{x_i} P = (1/2) ∫_{q_i}^{q_{i+1}} E_{ρ_r}[m_r²] g′(r) dr`, `i = 0..=K`.
pub fn x_derivative(field: &BackwardField<'_>, i: usize) -> Result<f64> {
    let sol = field.solution();
    let k = sol.depth();
    if i > k {
        return Err(Error::IndexOutOfRange {
            index: i,
            lo: 0,
            hi: k,
        });
    }
    let (a, b) = (sol.positions()[i], sol.positions()[i + 1]);
    if b <= a {
        return Ok(0.0);
    }
    let g = sol.covariance();
    let rule = GaussLegendre::new(8);
    let integral = adaptive_legendre(&rule, a, b, 1e-11, 12, &mut |r: f64| {
        field.inserted_overlap_moment(r) * g.g_prime(r)
    });
    Ok(0.5 * integral)
}

/// All first derivatives: `(∂_{q_l}, l = 1..=K)` and `(∂_{x_i}, i = 0..=K)`.
pub fn gradient(sol: &PsiSolution) -> Result<(Vec<f64>, Vec<f64>)> {
    let field = BackwardField::new(sol)?;
    let k = sol.depth();
    let dq = (1..=k)
        .map(|l| q_derivative(&field, l))
        .collect::<Result<Vec<_>>>()?;
    let dx = (0..=k)
        .map(|i| x_derivative(&field, i))
        .collect::<Result<Vec<_>>>()?;
    Ok((dq, dx))
}
