//! The SK variational functional over cascades.
//!
//! `G_{β,h}(x) = log 2 + P(x; g(q) = q, log cosh(βy + h)) − (β²/2) ∫_0^1 q x(q) dq`,
//! where the last term is the linear-boundary functional for `g(q) = q²/2`.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::backward::{q_derivative, x_derivative, BackwardField};
use crate::cascade::{keys, stream};
use crate::parisi::{
    linear_functional, parisi_functional, solve_psi_extended, BoundaryFunction, GridSpec,
};
use crate::quadrature::{adaptive_legendre, GaussLegendre};
use crate::{AtomicMeasure, CovarianceFunction, Error, Result};

/// Inverse temperature and external field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub beta: f64,
    pub h: f64,
}

impl ModelParams {
    pub fn new(beta: f64, h: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() || !h.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "need finite beta >= 0 and finite h, got beta = {beta}, h = {h}"
            )));
        }
        Ok(Self { beta, h })
    }

    pub fn boundary(&self) -> BoundaryFunction {
        BoundaryFunction::LogCosh {
            beta: self.beta,
            h: self.h,
        }
    }
}

/// `(β²/2) ∫_0^1 q x(q) dq`.
pub fn kappa_term(x: &AtomicMeasure, beta: f64) -> f64 {
    linear_functional(x, &CovarianceFunction::HalfSquare, beta)
}

/// `G_{β,h}(x)`.
pub fn g_functional(x: &AtomicMeasure, params: &ModelParams, spec: &GridSpec) -> Result<f64> {
    let p = parisi_functional(x, &CovarianceFunction::Linear, &params.boundary(), spec)?;
    Ok(core::f64::consts::LN_2 + p - kappa_term(x, params.beta))
}

/// `E f(z)` for standard normal `z`, where `f` depends on `s z + h` and may
/// vary on the scale `1/s`. Adaptive Gauss–Legendre with breakpoints around
/// `z = −h/s`.
fn normal_expect<F: Fn(f64) -> f64>(f: F, s: f64, h: f64) -> f64 {
    const CUT: f64 = 12.0;
    let rule = GaussLegendre::new(16);
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * core::f64::consts::PI).sqrt();
    let mut knots = alloc::vec![-CUT, CUT];
    if s > 0.0 {
        let c = -h / s;
        let w = 4.0 / s;
        knots.extend([c - w, c, c + w].iter().filter(|k| k.abs() < CUT));
    }
    knots.sort_by(f64::total_cmp);
    knots
        .windows(2)
        .map(|k| {
            adaptive_legendre(&rule, k[0], k[1], 1e-15, 30, &mut |z: f64| {
                f(z) * density(z)
            })
        })
        .sum()
}

/// `F(q) = E tanh²(βz√q + h) − q`.
fn self_consistency_gap(p: &ModelParams, q: f64) -> f64 {
    let s = p.beta * q.max(0.0).sqrt();
    normal_expect(
        |z| {
            let t = (s * z + p.h).tanh();
            t * t
        },
        s,
        p.h,
    ) - q
}

/// Every root of `E tanh²(βz√q + h) = q` on `[0, 1]`, in increasing order,
/// bracketed on a uniform scan and refined by bisection and secant steps.
pub fn self_consistent_roots(params: &ModelParams) -> Vec<f64> {
    let f = |q: f64| self_consistency_gap(params, q);
    const SCAN: usize = 400;
    let mut roots = Vec::new();
    let mut prev_q = 0.0;
    let mut prev_f = f(0.0);
    if prev_f == 0.0 {
        roots.push(0.0);
    }
    for j in 1..=SCAN {
        let q = j as f64 / SCAN as f64;
        let v = f(q);
        if v == 0.0 {
            roots.push(q);
        } else if prev_f != 0.0 && (prev_f < 0.0) != (v < 0.0) {
            roots.push(refine_root(&f, prev_q, q, prev_f, v));
        }
        prev_q = q;
        prev_f = v;
    }
    roots
}

fn refine_root<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> f64 {
    for _ in 0..200 {
        if b - a <= 1e-15 {
            break;
        }
        // secant proposal, kept only if it stays well inside the bracket
        let s = b - fb * (b - a) / (fb - fa);
        let mid = 0.5 * (a + b);
        let t = if s > a + 0.1 * (b - a) && s < b - 0.1 * (b - a) {
            s
        } else {
            mid
        };
        let ft = f(t);
        if ft == 0.0 {
            return t;
        }
        if (ft < 0.0) == (fa < 0.0) {
            a = t;
            fa = ft;
        } else {
            b = t;
            fb = ft;
        }
    }
    0.5 * (a + b)
}

/// `q̄`: the root reached by fixed-point iteration of `q ↦ E tanh²(βz√q + h)`
/// from `q_0 = tanh²(h)`. The map is increasing, so this is the smallest
/// root.
pub fn self_consistent_q(params: &ModelParams) -> f64 {
    self_consistent_roots(params)
        .first()
        .copied()
        .unwrap_or(0.0)
}

/// `β² E cosh⁻⁴(βz√q̄ + h) − 1`; positive on the unstable side.
pub fn at_criterion(params: &ModelParams) -> f64 {
    let q = self_consistent_q(params);
    params.beta * params.beta * sech4_mean(params, q) - 1.0
}

fn sech4_mean(p: &ModelParams, q: f64) -> f64 {
    let s = p.beta * q.sqrt();
    normal_expect(
        |z| {
            let c = (s * z + p.h).cosh();
            1.0 / (c * c * c * c)
        },
        s,
        p.h,
    )
}

/// `β_AT(h)`: root in `β` of [`at_criterion`] by bisection on the bracket.
pub fn at_beta(h: f64, bracket: (f64, f64)) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "h = {h} must be >= 0"
        )));
    }
    let crit = |b: f64| at_criterion(&ModelParams { beta: b, h });
    let (mut lo, mut hi) = bracket;
    let (flo, fhi) = (crit(lo), crit(hi));
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(Error::Bracket(alloc::format!(
            "criterion at beta = {lo} is {flo}, at beta = {hi} is {fhi}"
        )));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if crit(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(h, β_AT(h))` for each `h`; failures are kept per point.
pub fn at_line(h_values: &[f64], bracket: (f64, f64)) -> Vec<(f64, Result<f64>)> {
    h_values.iter().map(|&h| (h, at_beta(h, bracket))).collect()
}

/// The two-atom instability test at the high-temperature solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstabilityCheck {
    pub q_bar: f64,
    /// `−(β²/2)(1 − β² E cosh⁻⁴(βz√q̄ + h))`.
    pub closed_form: f64,
    /// `−2 [G(x*_{m,r}) − G(δ_q̄)] / ((1 − m)(r − q̄)²)` at the base steps.
    pub first_order: f64,
    /// Bilinear Richardson extrapolation of `first_order` from the base
    /// steps and their doubles.
    pub finite_difference: f64,
    pub m: f64,
    pub r: f64,
}

impl InstabilityCheck {
    pub fn relative_residual(&self) -> f64 {
        (self.finite_difference - self.closed_form).abs() / self.closed_form.abs().max(1e-300)
    }
}

/// `x*_{m,r}`: mass `m` at `q̄`, full mass at `r > q̄`.
pub fn two_atom_family(q_bar: f64, m: f64, r: f64) -> Result<AtomicMeasure> {
    AtomicMeasure::new(&[(q_bar, m), (r, 1.0)])
}

/// Closed form of `lim_{m→1⁻} ∂²_r ∂_m G(x*_{m,r})` at `r = q̄`, with a
/// finite-difference estimate from base steps `m = 1 − 10⁻²`, `r = q̄ + 10⁻²`.
pub fn instability_check(params: &ModelParams, spec: &GridSpec) -> Result<InstabilityCheck> {
    instability_check_at(params, 0.99, 0.01, spec)
}

pub fn instability_check_at(
    params: &ModelParams,
    m: f64,
    dr: f64,
    spec: &GridSpec,
) -> Result<InstabilityCheck> {
    if !(m > 0.0 && m < 1.0 && dr > 0.0) {
        return Err(Error::InvalidParameter("need 0 < m < 1 and dr > 0".into()));
    }
    let b2 = params.beta * params.beta;
    let q_bar = self_consistent_q(params);
    let closed_form = -0.5 * b2 * (1.0 - b2 * sech4_mean(params, q_bar));
    let base = g_functional(&AtomicMeasure::dirac(q_bar)?, params, spec)?;
    let eps = 1.0 - m;
    let estimate = |e: f64, d: f64| -> Result<f64> {
        let r = q_bar + d;
        if r >= 1.0 {
            return Err(Error::PositionOutOfRange(r));
        }
        let bent = g_functional(&two_atom_family(q_bar, 1.0 - e, r)?, params, spec)?;
        Ok(-2.0 * (bent - base) / (e * d * d))
    };
    let first_order = estimate(eps, dr)?;
    // leading errors are linear in (1 − m) and in (r − q̄)
    let finite_difference =
        4.0 * first_order - 2.0 * estimate(eps, 2.0 * dr)? - 2.0 * estimate(2.0 * eps, dr)?
            + estimate(2.0 * eps, 2.0 * dr)?;
    Ok(InstabilityCheck {
        q_bar,
        closed_form,
        first_order,
        finite_difference,
        m,
        r: q_bar + dr,
    })
}

/// Settings for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub starts: usize,
    pub max_iter: usize,
    /// Exit when the projected-gradient step has norm below this.
    pub tolerance: f64,
    /// Minimal spacing between consecutive atoms and masses.
    pub gap: f64,
    pub armijo: f64,
    pub seed: u64,
    pub grid: GridSpec,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iter: 500,
            tolerance: 1e-8,
            gap: 1e-6,
            armijo: 1e-4,
            seed: 0,
            grid: GridSpec::default(),
        }
    }
}

/// One projected-gradient run.
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub initial: AtomicMeasure,
    pub minimizer: AtomicMeasure,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub trace: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizationResult {
    pub minimizer: AtomicMeasure,
    pub value: f64,
    pub k: usize,
    pub trace: Vec<(usize, f64)>,
    pub gradient_norm: f64,
    /// Iteration cap hit without meeting the tolerance.
    pub flagged: bool,
    /// `E[tanh(βη̃₁+h) tanh(βη̃₂+h) | q₁₂ = q_i] − q_i` at the minimizer.
    pub stationarity: Vec<f64>,
    /// Every start, in start order.
    pub starts: Vec<StartOutcome>,
}

impl MinimizationResult {
    /// `max − min` of the values reached by the starts.
    pub fn dispersion(&self) -> f64 {
        let vals = self.starts.iter().map(|s| s.value);
        let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// Search space: atoms `q_1 < … < q_k < 1` with masses
/// `0 < x_1 < … < x_{k−1} < x_k = 1`, stored as `(q_1..q_k, x_1..x_{k−1})`.
struct Space {
    k: usize,
    gap: f64,
}

impl Space {
    fn measure(&self, v: &[f64]) -> Result<AtomicMeasure> {
        let pairs: Vec<(f64, f64)> = (0..self.k)
            .map(|l| (v[l], if l + 1 == self.k { 1.0 } else { v[self.k + l] }))
            .collect();
        AtomicMeasure::new(&pairs)
    }

    fn project(&self, v: &mut [f64]) {
        let k = self.k;
        let g = self.gap;
        project_ordered(&mut v[..k], 0.0, 1.0 - g, g);
        project_ordered(&mut v[k..], g, 1.0 - g, g);
    }
}

/// Euclidean projection onto `{lo ≤ v_1, v_l + gap ≤ v_{l+1}, v_n ≤ hi}`:
/// pool-adjacent-violators on `v_l − l·gap`, then clipping.
fn project_ordered(v: &mut [f64], lo: f64, hi: f64, gap: f64) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let u: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(l, &a)| a - l as f64 * gap)
        .collect();
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &a in &u {
        blocks.push((a, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let top = hi - (n - 1) as f64 * gap;
    let mut l = 0;
    for (s, c) in blocks {
        let mean = (s / c as f64).max(lo).min(top);
        for _ in 0..c {
            v[l] = mean + l as f64 * gap;
            l += 1;
        }
    }
}

/// `G` and its gradient in the `Space` coordinates.
fn value_and_gradient(
    space: &Space,
    v: &[f64],
    params: &ModelParams,
    spec: &GridSpec,
) -> Result<(f64, Vec<f64>)> {
    let x = space.measure(v)?;
    let value = g_functional(&x, params, spec)?;
    let grad = gradient_of(space, &x, params, spec)?;
    Ok((value, grad))
}

fn gradient_of(
    space: &Space,
    x: &AtomicMeasure,
    params: &ModelParams,
    spec: &GridSpec,
) -> Result<Vec<f64>> {
    let k = space.k;
    let b2 = params.beta * params.beta;
    let sol = solve_psi_extended(x, &CovarianceFunction::Linear, &params.boundary(), spec)?;
    let field = BackwardField::new(&sol)?;
    let (qs, xs) = x.levels();
    let mut grad = alloc::vec![0.0; 2 * k - 1];
    for l in 1..=k {
        let dk = 0.5 * b2 * (xs[l] - xs[l - 1]) * qs[l];
        grad[l - 1] = q_derivative(&field, l)? + dk;
    }
    for l in 1..k {
        let dk = 0.25 * b2 * (qs[l + 1] * qs[l + 1] - qs[l] * qs[l]);
        grad[k + l - 1] = x_derivative(&field, l)? - dk;
    }
    Ok(grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn run_start(
    space: &Space,
    start: Vec<f64>,
    params: &ModelParams,
    opts: &MinimizeOptions,
) -> Result<StartOutcome> {
    let spec = &opts.grid;
    let mut v = start;
    space.project(&mut v);
    let initial = space.measure(&v)?;
    let (mut f, mut g) = value_and_gradient(space, &v, params, spec)?;
    let initial_value = f;
    let mut trace = alloc::vec![(0, f)];
    let mut step = 0.1 / norm(&g).max(1e-12);
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        iterations = it;
        let mut probe: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - b).collect();
        space.project(&mut probe);
        pg_norm = norm(&probe.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        if pg_norm <= opts.tolerance {
            converged = true;
            break;
        }
        // Armijo backtracking along the projected path
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            space.project(&mut trial);
            let decrease: f64 = g
                .iter()
                .zip(trial.iter().zip(&v))
                .map(|(d, (t, a))| d * (t - a))
                .sum();
            if decrease >= 0.0 {
                step *= 0.5;
                continue;
            }
            let ft = g_functional(&space.measure(&trial)?, params, spec)?;
            if ft <= f + opts.armijo * decrease {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            // no further decrease resolvable at this precision
            break;
        };
        let gnext = gradient_of(space, &space.measure(&next)?, params, spec)?;
        // Barzilai–Borwein step for the next iteration
        let s: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnext.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 {
            (ss / sy).min(1e6)
        } else {
            step * 2.0
        };
        v = next;
        f = fnext;
        g = gnext;
        trace.push((it, f));
    }
    Ok(StartOutcome {
        initial,
        minimizer: space.measure(&v)?,
        value: f,
        initial_value,
        iterations,
        gradient_norm: pg_norm,
        converged,
        trace,
    })
}

/// Deterministic starting points: the first is evenly spread, the others
/// are uniform draws from the stream `[MULTISTART, s]`.
pub fn starting_points(k: usize, starts: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..starts)
        .map(|s| {
            if s == 0 {
                let mut v: Vec<f64> = (1..=k).map(|l| 0.8 * l as f64 / (k + 1) as f64).collect();
                v.extend((1..k).map(|l| l as f64 / k as f64));
                v
            } else {
                let mut rng = stream(seed, &[keys::MULTISTART, s as u64]);
                let mut qs: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 0.95).collect();
                let mut xs: Vec<f64> = (1..k).map(|_| rng.random::<f64>()).collect();
                qs.sort_by(f64::total_cmp);
                xs.sort_by(f64::total_cmp);
                qs.extend(xs);
                qs
            }
        })
        .collect()
}

/// Runs one start of [`minimize`]; exposed for parallel drivers.
pub fn minimize_from(
    params: &ModelParams,
    k: usize,
    start: Vec<f64>,
    opts: &MinimizeOptions,
) -> Result<StartOutcome> {
    if k == 0 || start.len() != 2 * k - 1 {
        return Err(Error::InvalidParameter(
            "start must hold k positions and k - 1 masses".into(),
        ));
    }
    run_start(&Space { k, gap: opts.gap }, start, params, opts)
}

/// Collects start outcomes into a result: best value wins, ties go to the
/// earlier start.
pub fn combine_starts(
    params: &ModelParams,
    k: usize,
    starts: Vec<StartOutcome>,
    opts: &MinimizeOptions,
) -> Result<MinimizationResult> {
    let best = starts
        .iter()
        .enumerate()
        .fold(None::<usize>, |b, (i, s)| match b {
            Some(j) if starts[j].value <= s.value => Some(j),
            _ => Some(i),
        })
        .ok_or_else(|| Error::InvalidParameter("need at least one start".into()))?;
    let b = &starts[best];
    let stationarity = stationarity_residuals(&b.minimizer, params, &opts.grid)?;
    Ok(MinimizationResult {
        minimizer: b.minimizer.clone(),
        value: b.value,
        k,
        trace: b.trace.clone(),
        gradient_norm: b.gradient_norm,
        flagged: !b.converged && b.iterations >= opts.max_iter,
        stationarity,
        starts,
    })
}

/// Projected-gradient minimization of `G` over `k`-atom measures whose top
/// mass is 1 (so `k = 1` is the family `δ_q`).
pub fn minimize(
    params: &ModelParams,
    k: usize,
    opts: &MinimizeOptions,
) -> Result<MinimizationResult> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let outcomes = starting_points(k, opts.starts.max(1), opts.seed)
        .into_iter()
        .map(|s| minimize_from(params, k, s, opts))
        .collect::<Result<Vec<_>>>()?;
    combine_starts(params, k, outcomes, opts)
}

/// `E[tanh(βη̃₁+h) tanh(βη̃₂+h) | q₁₂ = q_i] − q_i` for each atom below 1.
pub fn stationarity_residuals(
    x: &AtomicMeasure,
    params: &ModelParams,
    spec: &GridSpec,
) -> Result<Vec<f64>> {
    let (qs, _) = x.levels();
    let k = x.depth();
    if params.beta == 0.0 {
        let t = params.h.tanh();
        return Ok((1..=k).map(|l| t * t - qs[l]).collect());
    }
    let sol = solve_psi_extended(x, &CovarianceFunction::Linear, &params.boundary(), spec)?;
    let field = BackwardField::new(&sol)?;
    let b2 = params.beta * params.beta;
    Ok((1..=k)
        .map(|l| field.overlap_moment(l) / b2 - qs[l])
        .collect())
}

/// Largest spin count for exact enumeration.
pub const MAX_SPINS: usize = 16;

/// `log Σ_σ exp((β/√N) Σ_{i<j} J_ij σ_i σ_j + h Σ_i σ_i)` by Gray-code
/// enumeration; `couplings[i][j]` is read for `i < j`.
pub fn sk_log_partition(couplings: &[Vec<f64>], params: &ModelParams) -> Result<f64> {
    let n = couplings.len();
    if n == 0 || n > MAX_SPINS {
        return Err(Error::TooLarge("spin count", MAX_SPINS));
    }
    let scale = params.beta / (n as f64).sqrt();
    let j = |a: usize, b: usize| {
        if a < b {
            couplings[a][b]
        } else {
            couplings[b][a]
        }
    };
    // start from all spins up
    let mut sigma = alloc::vec![1.0f64; n];
    let mut field: Vec<f64> = (0..n)
        .map(|a| scale * (0..n).filter(|&b| b != a).map(|b| j(a, b)).sum::<f64>())
        .collect();
    let mut energy = 0.5 * field.iter().sum::<f64>() + params.h * n as f64;
    let mut acc = crate::cascade::Lse::EMPTY;
    acc.add(energy);
    for t in 1u64..(1u64 << n) {
        let a = t.trailing_zeros() as usize;
        // flipping σ_a changes the exponent by −2σ_a (field_a + h)
        energy -= 2.0 * sigma[a] * (field[a] + params.h);
        sigma[a] = -sigma[a];
        for b in 0..n {
            if b != a {
                field[b] += 2.0 * scale * j(a, b) * sigma[a];
            }
        }
        acc.add(energy);
    }
    Ok(acc.value())
}

/// Couplings for disorder draw `d`, from the stream `[SK_DISORDER, d]`.
pub fn sk_couplings(n: usize, seed: u64, draw: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, &[keys::SK_DISORDER, draw]);
    let mut j = alloc::vec![alloc::vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            j[a][b] = StandardNormal.sample(&mut rng);
        }
    }
    j
}

/// `(1/N) E_J log Z_N` over `n_disorder` draws: `(mean, stderr)`.
pub fn sk_finite_n_pressure(
    n: usize,
    params: &ModelParams,
    n_disorder: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n == 0 || n > MAX_SPINS {
        return Err(Error::TooLarge("spin count", MAX_SPINS));
    }
    let values = (0..n_disorder as u64)
        .map(|d| sk_log_partition(&sk_couplings(n, seed, d), params).map(|v| v / n as f64))
        .collect::<Result<Vec<_>>>()?;
    let s = crate::stats::summarize(&values);
    Ok((s.mean, s.stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(beta: f64, h: f64) -> ModelParams {
        ModelParams::new(beta, h).unwrap()
    }

    #[test]
    fn projection_orders_with_gap() {
        let mut v = [0.5, 0.2, 0.9, 1.2];
        project_ordered(&mut v, 0.0, 1.0, 0.01);
        for w in v.windows(2) {
            assert!(w[1] - w[0] >= 0.01 - 1e-15);
        }
        assert!(v[3] <= 1.0 + 1e-15 && v[0] >= 0.0);
        let mut fixed = [0.1, 0.3, 0.6];
        project_ordered(&mut fixed, 0.0, 1.0, 0.01);
        assert_eq!(fixed, [0.1, 0.3, 0.6]);
    }

    #[test]
    fn g_at_dirac_zero() {
        for (beta, h) in [(0.0, 0.5), (0.7, 0.0), (1.3, 0.4)] {
            let v = g_functional(
                &AtomicMeasure::dirac(0.0).unwrap(),
                &p(beta, h),
                &GridSpec::default(),
            )
            .unwrap();
            let want = core::f64::consts::LN_2 + (h as f64).cosh().ln() + beta * beta / 4.0;
            assert_abs_diff_eq!(v, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn self_consistency_special_cases() {
        assert_abs_diff_eq!(
            self_consistent_q(&p(0.0, 0.7)),
            0.7f64.tanh().powi(2),
            epsilon = 1e-12
        );
        assert_eq!(self_consistent_q(&p(0.9, 0.0)), 0.0);
        let roots = self_consistent_roots(&p(1.5, 0.0));
        assert_eq!(roots.len(), 2);
        assert!(roots[1] > 0.3);
    }

    #[test]
    fn sk_single_spin() {
        let params = p(0.8, 0.35);
        let (mean, se) = sk_finite_n_pressure(1, &params, 5, 3).unwrap();
        assert_abs_diff_eq!(mean, (2.0 * 0.35f64.cosh()).ln(), epsilon = 1e-14);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn gray_code_matches_direct_sum() {
        let params = p(0.9, -0.2);
        let n = 5;
        let j = sk_couplings(n, 11, 0);
        let scale = params.beta / (n as f64).sqrt();
        let mut terms = Vec::new();
        for s in 0u32..(1 << n) {
            let sig: Vec<f64> = (0..n)
                .map(|i| if s >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            let mut e = params.h * sig.iter().sum::<f64>();
            for a in 0..n {
                for b in a + 1..n {
                    e += scale * j[a][b] * sig[a] * sig[b];
                }
            }
            terms.push(e);
        }
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let direct = top + terms.iter().map(|e| (e - top).exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(
            sk_log_partition(&j, &params).unwrap(),
            direct,
            epsilon = 1e-12
        );
    }
}
