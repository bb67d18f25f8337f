//! The recursive Gaussian-smoothing solver.
//!
//! For levels `0 = q_0 ≤ q_1 < … < q_K < q_{K+1} = 1` with exponents
//! `x_0 = 0, x_1, …, x_K`,
//!
//! ```text
//! ψ_{q_{K+1}} = ψ,
//! ψ_{q_l}(y) = (1/x_l) log E_z exp(x_l ψ_{q_{l+1}}(y + z √(g(q_{l+1}) − g(q_l)))),
//! ```
//!
//! read as a plain expectation when `x_l = 0`. The Parisi functional is
//! `ψ_{q_0}(0)`. Singular measures (`x_K = 1`, `q_K < 1`) use the same
//! recursion with exponent one on the last interval.

use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

use crate::grid::{GridFunction, UniformGrid};
use crate::measures::{AtomicMeasure, CovarianceFunction, POSITION_TOL};
use crate::quadrature::GaussHermite;
use crate::{Error, Result};

/// A boundary function with bounded first and second derivatives.
#[derive(Clone, Copy, PartialEq)]
pub enum BoundaryFunction {
    /// `ψ(y) = log cosh(βy + h)`.
    LogCosh {
        beta: f64,
        h: f64,
    },
    /// `ψ(y) = βy`.
    Linear {
        beta: f64,
    },
    /// `ψ(y) = c`.
    Constant(f64),
    Custom(CustomBoundary),
}

/// User-supplied `ψ`, `ψ′`, `ψ″` and a bound `C ≥ sup |ψ′|`.
#[derive(Clone, Copy)]
pub struct CustomBoundary {
    pub name: &'static str,
    pub value: fn(f64) -> f64,
    pub first: fn(f64) -> f64,
    pub second: fn(f64) -> f64,
    pub bound: f64,
}

impl PartialEq for CustomBoundary {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.bound == other.bound
            && self.value as usize == other.value as usize
            && self.first as usize == other.first as usize
            && self.second as usize == other.second as usize
    }
}

impl fmt::Debug for BoundaryFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LogCosh { beta, h } => write!(f, "LogCosh {{ beta: {beta}, h: {h} }}"),
            Self::Linear { beta } => write!(f, "Linear {{ beta: {beta} }}"),
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Custom(c) => write!(f, "Custom({}, C = {})", c.name, c.bound),
        }
    }
}

/// `log cosh(a)` without overflow.
pub fn log_cosh(a: f64) -> f64 {
    let b = a.abs();
    b + (-2.0 * b).exp().ln_1p() - core::f64::consts::LN_2
}

impl BoundaryFunction {
    pub fn value(&self, y: f64) -> f64 {
        match *self {
            Self::LogCosh { beta, h } => log_cosh(beta * y + h),
            Self::Linear { beta } => beta * y,
            Self::Constant(c) => c,
            Self::Custom(c) => (c.value)(y),
        }
    }

    pub fn first(&self, y: f64) -> f64 {
        match *self {
            Self::LogCosh { beta, h } => beta * (beta * y + h).tanh(),
            Self::Linear { beta } => beta,
            Self::Constant(_) => 0.0,
            Self::Custom(c) => (c.first)(y),
        }
    }

    pub fn second(&self, y: f64) -> f64 {
        match *self {
            Self::LogCosh { beta, h } => {
                let c = (beta * y + h).cosh();
                beta * beta / (c * c)
            }
            Self::Linear { .. } | Self::Constant(_) => 0.0,
            Self::Custom(c) => (c.second)(y),
        }
    }

    /// The bound `C` on `|ψ′|`.
    pub fn bound(&self) -> f64 {
        match *self {
            Self::LogCosh { beta, .. } | Self::Linear { beta } => beta.abs(),
            Self::Constant(_) => 0.0,
            Self::Custom(c) => c.bound,
        }
    }

    /// `(β, h)` used to size the default grid.
    fn scale(&self) -> (f64, f64) {
        match *self {
            Self::LogCosh { beta, h } => (beta.abs(), h.abs()),
            _ => (self.bound(), 0.0),
        }
    }

    /// For boundaries where `log E exp(ψ(y + σz)) = ψ(y) + c·σ²` exactly,
    /// returns `c`.
    fn exponential_shift(&self) -> Option<f64> {
        match *self {
            Self::LogCosh { beta, .. } | Self::Linear { beta } => Some(0.5 * beta * beta),
            Self::Constant(_) => Some(0.0),
            Self::Custom(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LogCosh { .. } => "log-cosh",
            Self::Linear { .. } => "linear",
            Self::Constant(_) => "constant",
            Self::Custom(c) => c.name,
        }
    }
}

/// Quadrature and grid sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Gauss–Hermite order.
    pub n_h: usize,
    /// Grid nodes on `[-Y, Y]`.
    pub n_y: usize,
    /// `Y`; `None` selects `8·√g(1)·max(1, β) + |h|`, widened for log-cosh
    /// boundaries to at least `(|h| + 12)/β` (capped at `200 + |h|`).
    pub half_width: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_h: 64,
            n_y: 2048,
            half_width: None,
        }
    }
}

impl GridSpec {
    pub fn resolve_half_width(&self, g: &CovarianceFunction, psi: &BoundaryFunction) -> f64 {
        self.half_width.unwrap_or_else(|| {
            let (beta, h) = psi.scale();
            let base = 8.0 * g.g(1.0).sqrt() * beta.max(1.0) + h;
            match psi {
                // edge-slope extrapolation needs βY − |h| well past the bend of log cosh
                BoundaryFunction::LogCosh { .. } if beta > 0.0 => {
                    base.max(((h + 12.0) / beta).min(200.0 + h))
                }
                _ => base,
            }
        })
    }
}

/// `(1/e) log E exp(e f(y + σz))`, or `E f(y + σz)` when `e = 0`.
pub(crate) fn smooth<F: Fn(f64) -> f64>(
    gh: &GaussHermite,
    exponent: f64,
    sigma: f64,
    y: f64,
    f: F,
    buf: &mut Vec<f64>,
) -> f64 {
    if sigma == 0.0 {
        return f(y);
    }
    if exponent == 0.0 {
        gh.expect(|z| f(y + sigma * z))
    } else {
        gh.log_expect_exp(|z| exponent * f(y + sigma * z), buf) / exponent
    }
}

/// Grids of `ψ_{q_l}` for every level of a measure.
#[derive(Debug, Clone)]
pub struct PsiSolution {
    measure: AtomicMeasure,
    g: CovarianceFunction,
    boundary: BoundaryFunction,
    qs: Vec<f64>,
    xs: Vec<f64>,
    gs: Vec<f64>,
    gh: GaussHermite,
    /// `grids[l]` holds `ψ_{q_l}` for `l = 0..=K`.
    grids: Vec<GridFunction>,
    value: f64,
}

/// Solves the recursion for `x ∈ M_a^{<1}`.
pub fn solve_psi(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    psi: &BoundaryFunction,
    spec: &GridSpec,
) -> Result<PsiSolution> {
    if !x.in_m_lt1() {
        return Err(Error::NotInMaLt1);
    }
    solve(x, g, psi, spec, false)
}

/// Solves the recursion for any atomic measure. On singular measures the
/// last interval carries exponent one.
pub fn solve_psi_extended(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    psi: &BoundaryFunction,
    spec: &GridSpec,
) -> Result<PsiSolution> {
    solve(x, g, psi, spec, false)
}

fn solve(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    psi: &BoundaryFunction,
    spec: &GridSpec,
    closed_form_top: bool,
) -> Result<PsiSolution> {
    if spec.n_h == 0 || spec.n_y < 5 {
        return Err(Error::InvalidParameter("grid too small".into()));
    }
    let (qs, xs) = x.levels();
    let gs: Vec<f64> = qs.iter().map(|&q| g.g(q)).collect();
    let k = xs.len() - 1;
    let gh = GaussHermite::new(spec.n_h);
    let grid = UniformGrid::new(spec.resolve_half_width(g, psi), spec.n_y);
    let bound = Some(psi.bound());
    let mut buf = Vec::with_capacity(spec.n_h);
    let mut grids: Vec<Option<GridFunction>> = alloc::vec![None; k + 1];
    for l in (0..=k).rev() {
        let sigma = (gs[l + 1] - gs[l]).max(0.0).sqrt();
        let values: Vec<f64> = if l == k && closed_form_top {
            let shift = psi
                .exponential_shift()
                .ok_or(Error::UnsupportedBoundary(psi.name()))?;
            let c = shift * (gs[l + 1] - gs[l]);
            grid.nodes().map(|y| psi.value(y) + c).collect()
        } else if l == k {
            grid.nodes()
                .map(|y| smooth(&gh, xs[l], sigma, y, |u| psi.value(u), &mut buf))
                .collect()
        } else {
            let next = grids[l + 1].as_ref().expect("level above solved");
            grid.nodes()
                .map(|y| smooth(&gh, xs[l], sigma, y, |u| next.eval(u), &mut buf))
                .collect()
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::QuadratureOverflow { level: l });
        }
        grids[l] = Some(GridFunction::new(grid, values, bound));
    }
    let grids: Vec<GridFunction> = grids.into_iter().map(|g| g.expect("solved")).collect();
    let mut sol = PsiSolution {
        measure: x.clone(),
        g: g.clone(),
        boundary: *psi,
        qs,
        xs,
        gs,
        gh,
        grids,
        value: 0.0,
    };
    sol.value = sol.step_from_above(0, 0.0, &mut buf);
    if !sol.value.is_finite() {
        return Err(Error::QuadratureOverflow { level: 0 });
    }
    Ok(sol)
}

impl PsiSolution {
    pub fn measure(&self) -> &AtomicMeasure {
        &self.measure
    }

    pub fn covariance(&self) -> &CovarianceFunction {
        &self.g
    }

    pub fn boundary(&self) -> &BoundaryFunction {
        &self.boundary
    }

    /// Level positions `[0, q_1, …, q_K, 1]`.
    pub fn positions(&self) -> &[f64] {
        &self.qs
    }

    /// Level exponents `[0, x_1, …, x_K]`.
    pub fn exponents(&self) -> &[f64] {
        &self.xs
    }

    /// `g(q_l)` per level.
    pub fn g_values(&self) -> &[f64] {
        &self.gs
    }

    /// `K`, the number of levels strictly inside the recursion.
    pub fn depth(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn gauss_hermite(&self) -> &GaussHermite {
        &self.gh
    }

    /// Grid of `ψ_{q_l}`, `l = 0..=K`.
    pub fn grid(&self, l: usize) -> &GridFunction {
        &self.grids[l]
    }

    pub fn spatial_grid(&self) -> &UniformGrid {
        self.grids[0].grid()
    }

    /// `ψ_{q_l}(y)` for `l = 0..=K+1`; the top level is the boundary itself.
    pub fn psi(&self, l: usize, y: f64) -> f64 {
        if l == self.xs.len() {
            self.boundary.value(y)
        } else {
            self.grids[l].eval(y)
        }
    }

    /// `∂_y ψ_{q_l}(y)`.
    pub fn dpsi(&self, l: usize, y: f64) -> f64 {
        if l == self.xs.len() {
            self.boundary.first(y)
        } else {
            self.grids[l].derivative(y)
        }
    }

    /// `ψ_{q_l}(y)` recomputed by one quadrature step from level `l + 1`.
    pub fn step_from_above(&self, l: usize, y: f64, buf: &mut Vec<f64>) -> f64 {
        let sigma = (self.gs[l + 1] - self.gs[l]).max(0.0).sqrt();
        smooth(&self.gh, self.xs[l], sigma, y, |u| self.psi(l + 1, u), buf)
    }

    /// The Parisi functional `ψ_{q_0}(0)`.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Index `l ≥ 1` with `q_l = q`, if `q` is an atom level below 1.
    pub fn level_of(&self, q: f64) -> Option<usize> {
        (1..self.xs.len()).find(|&l| (self.qs[l] - q).abs() <= POSITION_TOL)
    }

    /// Level `l` with `q_l ≤ r < q_{l+1}` (the last level for `r = 1`).
    pub fn interval_of(&self, r: f64) -> usize {
        let k = self.depth();
        (0..=k).rev().find(|&l| self.qs[l] <= r).unwrap_or(0)
    }

    /// `ψ_r(y)` at an arbitrary `r ∈ [0, 1]`, continuing the recursion from
    /// the level above `r`.
    pub fn psi_at(&self, r: f64, y: f64, buf: &mut Vec<f64>) -> f64 {
        if r >= 1.0 {
            return self.boundary.value(y);
        }
        let l = self.interval_of(r);
        if (self.qs[l] - r).abs() <= POSITION_TOL {
            return self.psi(l, y);
        }
        let sigma = (self.gs[l + 1] - self.g.g(r)).max(0.0).sqrt();
        smooth(&self.gh, self.xs[l], sigma, y, |u| self.psi(l + 1, u), buf)
    }

    /// `ψ_r` sampled on the solution grid.
    pub fn psi_grid_at(&self, r: f64) -> GridFunction {
        let mut buf = Vec::new();
        GridFunction::from_fn(
            *self.spatial_grid(),
            |y| self.psi_at(r, y, &mut buf),
            Some(self.boundary.bound()),
        )
    }

    /// Largest deviation of a finer-quadrature recursion step from the
    /// stored grids, over all nodes and levels.
    pub fn recursion_residual(&self, order: usize) -> f64 {
        let fine = GaussHermite::new(order);
        let mut buf = Vec::new();
        let mut worst: f64 = 0.0;
        for l in 0..self.grids.len() {
            let sigma = (self.gs[l + 1] - self.gs[l]).max(0.0).sqrt();
            let grid = self.grids[l].grid();
            for (j, y) in grid.nodes().enumerate() {
                let v = smooth(
                    &fine,
                    self.xs[l],
                    sigma,
                    y,
                    |u| self.psi(l + 1, u),
                    &mut buf,
                );
                worst = worst.max((v - self.grids[l].values()[j]).abs());
            }
        }
        worst
    }
}

/// `P_{ψ,g}(x)` for any atomic measure. Singular measures go through
/// [`parisi_singular`] when the boundary admits it and through the extended
/// recursion otherwise.
pub fn parisi_functional(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    psi: &BoundaryFunction,
    spec: &GridSpec,
) -> Result<f64> {
    if x.in_m_lt1() {
        return solve_psi(x, g, psi, spec).map(|s| s.value());
    }
    match parisi_singular(x, g, psi, spec) {
        Err(Error::UnsupportedBoundary(_)) => {
            solve_psi_extended(x, g, psi, spec).map(|s| s.value())
        }
        r => r,
    }
}

/// `P_{ψ,g}(x)` for `x(q_k) = 1` with `q_k < 1`, using
/// `ψ_{q_k} = ψ + (β²/2)(g(1) − g(q_k))` for log-cosh and linear `ψ`.
pub fn parisi_singular(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    psi: &BoundaryFunction,
    spec: &GridSpec,
) -> Result<f64> {
    if x.in_m_lt1() {
        return Err(Error::NotSingular);
    }
    let shift = psi
        .exponential_shift()
        .ok_or(Error::UnsupportedBoundary(psi.name()))?;
    if x.depth() == 1 {
        let q = x.atoms()[0].0;
        let gh = GaussHermite::new(spec.n_h);
        let s = g.g(q).sqrt();
        return Ok(shift * (g.g(1.0) - g.g(q)) + gh.expect(|z| psi.value(s * z)));
    }
    solve(x, g, psi, spec, true).map(|s| s.value())
}

/// `(β²/2) ∫_0^1 x(q) dg(q)`, the functional for `ψ = βy`.
pub fn linear_functional(x: &AtomicMeasure, g: &CovarianceFunction, beta: f64) -> f64 {
    let (qs, xs) = x.levels();
    0.5 * beta
        * beta
        * xs.iter()
            .enumerate()
            .map(|(l, &e)| e * (g.g(qs[l + 1]) - g.g(qs[l])))
            .sum::<f64>()
}
