use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::{keys, mix, sample_rem_log, stream};
use crate::measures::{AtomicMeasure, CovarianceFunction};
use crate::parisi::{BoundaryFunction, PsiSolution};
use crate::stats::{summarize, Summary};
use crate::{Error, Result};

/// Default bound on the number of leaves of a materialized or simulated tree.
pub const DEFAULT_LEAF_CAP: usize = 1 << 24;

fn leaf_count(branching: usize, depth: usize, cap: usize) -> Result<usize> {
    let mut n: usize = 1;
    for _ in 0..depth {
        n = n
            .checked_mul(branching)
            .filter(|&v| v <= cap)
            .ok_or(Error::TooManyLeaves {
                leaves: usize::MAX,
                cap,
            })?;
    }
    Ok(n)
}

/// A truncated GREM: `B` children per node and `K` levels, where `K` is the
/// number of atoms of `x` below `q = 1`.
///
/// Nodes at level `l` are numbered `0..B^l`; the children of node `p` are
/// `p·B + j`, ordered by decreasing REM atom.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRealization {
    pub measure: AtomicMeasure,
    pub branching: usize,
    pub seed: u64,
    /// `log_weights[l - 1][α]` is `log ξ_α` for nodes at level `l = 1..=K`.
    pub log_weights: Vec<Vec<f64>>,
    /// `fields[l][α] = κ_α(q_{l+1})` for nodes at level `l = 0..=K`, so
    /// `fields[K]` holds `κ_α(1)` at the leaves.
    pub fields: Option<Vec<Vec<f64>>>,
}

impl CascadeRealization {
    pub fn depth(&self) -> usize {
        self.log_weights.len()
    }

    pub fn leaves(&self) -> usize {
        self.branching.pow(self.depth() as u32)
    }

    /// `log ξ_α` for leaf `α` (zero for the trivial tree).
    pub fn leaf_log_weight(&self, leaf: usize) -> f64 {
        self.log_weights.last().map_or(0.0, |w| w[leaf])
    }

    /// Index at level `l` of the ancestor of `leaf`.
    pub fn ancestor(&self, leaf: usize, l: usize) -> usize {
        leaf / self.branching.pow((self.depth() - l) as u32)
    }

    /// `q_{L+1}` with `L` the deepest level where the two leaves share an
    /// ancestor.
    pub fn overlap(&self, a: usize, b: usize) -> f64 {
        let (qs, _) = self.measure.levels();
        let k = self.depth();
        let l = (0..=k)
            .rev()
            .find(|&l| self.ancestor(a, l) == self.ancestor(b, l))
            .unwrap_or(0);
        qs[l + 1]
    }
}

/// Samples the weight tree of a truncated GREM.
pub fn sample_grem(
    x: &AtomicMeasure,
    branching: usize,
    seed: u64,
    leaf_cap: usize,
) -> Result<CascadeRealization> {
    if !x.in_m_lt1() {
        return Err(Error::NotInMaLt1);
    }
    if branching < 2 {
        return Err(Error::InvalidParameter(
            "branching must be at least 2".into(),
        ));
    }
    let (_, xs) = x.levels();
    let k = xs.len() - 1;
    leaf_count(branching, k, leaf_cap).map_err(|_| Error::TooManyLeaves {
        leaves: branching.saturating_pow(k as u32),
        cap: leaf_cap,
    })?;
    let mut log_weights: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut parents = alloc::vec![0.0];
    for l in 1..=k {
        let mut level = Vec::with_capacity(parents.len() * branching);
        for (p, &lw) in parents.iter().enumerate() {
            let mut rng = stream(seed, &[l as u64, p as u64]);
            let pts = sample_rem_log(xs[l], branching, &mut rng)?;
            level.extend(pts.iter().map(|&z| lw + z));
        }
        log_weights.push(level.clone());
        parents = level;
    }
    Ok(CascadeRealization {
        measure: x.clone(),
        branching,
        seed,
        log_weights,
        fields: None,
    })
}

/// Adds Gaussian cavity fields with independent increments of variance
/// `g(q_{l+1}) − g(q_l)` along every branch.
pub fn sample_cavity_field(
    real: &CascadeRealization,
    g: &CovarianceFunction,
    seed: u64,
) -> CascadeRealization {
    let (qs, _) = real.measure.levels();
    let k = real.depth();
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    let sd = |l: usize| (g.g(qs[l + 1]) - g.g(qs[l])).max(0.0).sqrt();
    let mut root_rng = stream(seed, &[keys::FIELD, keys::ROOT]);
    let z: f64 = StandardNormal.sample(&mut root_rng);
    fields.push(alloc::vec![sd(0) * z]);
    for l in 1..=k {
        let prev = &fields[l - 1];
        let mut level = Vec::with_capacity(prev.len() * real.branching);
        for (p, &kp) in prev.iter().enumerate() {
            let mut rng = stream(seed, &[keys::FIELD, l as u64, p as u64]);
            for _ in 0..real.branching {
                let z: f64 = StandardNormal.sample(&mut rng);
                level.push(kp + sd(l) * z);
            }
        }
        fields.push(level);
    }
    let mut out = real.clone();
    out.fields = Some(fields);
    out
}

/// Running `log Σ exp(v_i)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Lse {
    max: f64,
    sum: f64,
}

impl Lse {
    pub(crate) const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    pub(crate) fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

struct Walk<'a, F: Fn(f64) -> f64> {
    xs: &'a [f64],
    gs: Vec<f64>,
    depth: usize,
    q_level: usize,
    g_q: f64,
    f: &'a F,
    branching: usize,
    seed: u64,
    sample: u64,
    num: [Lse; 2],
    den: [Lse; 2],
}

impl<F: Fn(f64) -> f64> Walk<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn node(
        &mut self,
        l: usize,
        id: u64,
        start: f64,
        za: f64,
        zb: f64,
        kq: f64,
        lw: f64,
        in_b: bool,
    ) {
        let (kq, end) = if l == self.q_level {
            let kq = start + (self.g_q - self.gs[l]).max(0.0).sqrt() * za;
            (kq, kq + (self.gs[l + 1] - self.g_q).max(0.0).sqrt() * zb)
        } else {
            (
                kq,
                start + (self.gs[l + 1] - self.gs[l]).max(0.0).sqrt() * za,
            )
        };
        if l == self.depth {
            let v = (self.f)(kq);
            self.num[1].add(lw + v);
            self.den[1].add(lw);
            if in_b {
                self.num[0].add(lw + v);
                self.den[0].add(lw);
            }
            return;
        }
        let mut rng = stream(self.seed, &[keys::FUNCTIONAL, self.sample, id]);
        let inv_x = 1.0 / self.xs[l + 1];
        let mut e = 0.0;
        for j in 0..2 * self.branching {
            let step: f64 = Exp1.sample(&mut rng);
            e += step;
            let za: f64 = StandardNormal.sample(&mut rng);
            let zb: f64 = StandardNormal.sample(&mut rng);
            self.node(
                l + 1,
                mix(id, j as u64 + 1),
                end,
                za,
                zb,
                kq,
                lw - e.ln() * inv_x,
                in_b && j < self.branching,
            );
        }
    }
}

/// One Monte Carlo sample of `log(Σ_α ξ_α e^{f(κ_α(q))} / Σ_α ξ_α)` on the
/// trees truncated at `B` and `2B` children per node. The `B` tree is the
/// sub-tree of the `2B` tree formed by the first `B` children of every node,
/// so the two values share their randomness.
pub fn functional_sample<F: Fn(f64) -> f64>(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    f: &F,
    q: f64,
    branching: usize,
    seed: u64,
    sample: u64,
) -> Result<(f64, f64)> {
    if !x.in_m_lt1() {
        return Err(Error::NotInMaLt1);
    }
    if branching < 1 {
        return Err(Error::InvalidParameter("branching must be positive".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::PositionOutOfRange(q));
    }
    let (qs, xs) = x.levels();
    let depth = xs.len() - 1;
    leaf_count(2 * branching, depth, DEFAULT_LEAF_CAP).map_err(|_| Error::TooManyLeaves {
        leaves: (2 * branching).saturating_pow(depth as u32),
        cap: DEFAULT_LEAF_CAP,
    })?;
    let q_level = if q >= 1.0 {
        depth
    } else {
        (0..=depth).rev().find(|&l| qs[l] <= q).unwrap_or(0)
    };
    let mut walk = Walk {
        xs: &xs,
        gs: qs.iter().map(|&v| g.g(v)).collect(),
        depth,
        q_level,
        g_q: g.g(q),
        f,
        branching,
        seed,
        sample,
        num: [Lse::EMPTY; 2],
        den: [Lse::EMPTY; 2],
    };
    let mut rng = stream(seed, &[keys::FUNCTIONAL, sample, keys::ROOT]);
    let za: f64 = StandardNormal.sample(&mut rng);
    let zb: f64 = StandardNormal.sample(&mut rng);
    walk.node(0, 0, 0.0, za, zb, 0.0, 0.0, true);
    Ok((
        walk.num[0].value() - walk.den[0].value(),
        walk.num[1].value() - walk.den[1].value(),
    ))
}

/// Monte Carlo estimate of a cascade functional at truncations `B` and `2B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub branching: usize,
    pub at_b: Summary,
    pub at_2b: Summary,
    /// `2·|estimate(2B) − estimate(B)|`.
    pub truncation_band: f64,
}

impl McEstimate {
    /// Aggregates per-sample `(B, 2B)` values.
    pub fn from_samples(branching: usize, samples: &[(f64, f64)]) -> Self {
        let b: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let b2: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (at_b, at_2b) = (summarize(&b), summarize(&b2));
        Self {
            branching,
            at_b,
            at_2b,
            truncation_band: 2.0 * (at_2b.mean - at_b.mean).abs(),
        }
    }

    /// The reported estimate (the `2B` value).
    pub fn estimate(&self) -> f64 {
        self.at_2b.mean
    }

    pub fn stderr(&self) -> f64 {
        self.at_2b.stderr
    }

    /// Whether `target` lies within `k·σ` plus the truncation band.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.estimate() - target).abs() <= k * self.stderr() + self.truncation_band
    }
}

/// `E log(Σ_α ξ_α e^{f(κ_α(q))} / Σ_α ξ_α)` over `samples` independent
/// truncated cascades.
pub fn mc_functional_at<F: Fn(f64) -> f64>(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    f: &F,
    q: f64,
    branching: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let vals = (0..samples as u64)
        .map(|s| functional_sample(x, g, f, q, branching, seed, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(McEstimate::from_samples(branching, &vals))
}

/// Monte Carlo estimate of `E log(Σ_α ξ_α e^{ψ(κ_α(1))} / Σ_α ξ_α)`.
pub fn mc_functional(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    psi: &BoundaryFunction,
    branching: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_functional_at(x, g, &|y| psi.value(y), 1.0, branching, samples, seed)
}

/// The same functional with `ψ_q` in place of `ψ`, evaluated at the field
/// `κ_α(q)`.
pub fn mc_psi_level(
    sol: &PsiSolution,
    q: f64,
    branching: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let psi_q = sol.psi_grid_at(q);
    mc_functional_at(
        sol.measure(),
        sol.covariance(),
        &|y| psi_q.eval(y),
        q,
        branching,
        samples,
        seed,
    )
}

fn gibbs_draw<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Overlap matrix of `n` replicas drawn independently from the Gibbs
/// weights `ξ_α / Σ ξ` of one truncated cascade.
pub fn replica_overlap_sample(
    x: &AtomicMeasure,
    branching: usize,
    n: usize,
    seed: u64,
    sample: u64,
) -> Result<Vec<Vec<f64>>> {
    let real = sample_grem(
        x,
        branching,
        mix(seed, mix(keys::REPLICAS, sample)),
        DEFAULT_LEAF_CAP,
    )?;
    let leaves = real.leaves();
    let top = (0..leaves)
        .map(|a| real.leaf_log_weight(a))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    let cdf: Vec<f64> = (0..leaves)
        .map(|a| {
            acc += (real.leaf_log_weight(a) - top).exp();
            acc
        })
        .collect();
    let mut rng = stream(seed, &[keys::REPLICAS, sample]);
    let picks: Vec<usize> = (0..n).map(|_| gibbs_draw(&cdf, &mut rng)).collect();
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        real.overlap(picks[i], picks[j])
                    }
                })
                .collect()
        })
        .collect())
}

/// For one truncated cascade: the overlap of the two leaves with the
/// largest weights, and the largest normalized weight.
pub fn ranked_pair_sample(
    x: &AtomicMeasure,
    branching: usize,
    seed: u64,
    sample: u64,
) -> Result<(f64, f64)> {
    let real = sample_grem(
        x,
        branching,
        mix(seed, mix(keys::RANKED, sample)),
        DEFAULT_LEAF_CAP,
    )?;
    let leaves = real.leaves();
    if leaves < 2 {
        return Err(Error::InvalidParameter("need at least two leaves".into()));
    }
    let (mut first, mut second) = (0usize, usize::MAX);
    let mut lse = Lse::EMPTY;
    for a in 0..leaves {
        let w = real.leaf_log_weight(a);
        lse.add(w);
        if a == 0 {
            continue;
        }
        if w > real.leaf_log_weight(first) {
            second = first;
            first = a;
        } else if second == usize::MAX || w > real.leaf_log_weight(second) {
            second = a;
        }
    }
    Ok((
        real.overlap(first, second),
        (real.leaf_log_weight(first) - lse.value()).exp(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::is_ultrametric;
    use approx::assert_abs_diff_eq;

    fn m(s: &str) -> AtomicMeasure {
        s.parse().unwrap()
    }

    #[test]
    fn one_level_tree_is_a_rem() {
        let x = m("0.3:0.4,1:1");
        let real = sample_grem(&x, 20, 5, DEFAULT_LEAF_CAP).unwrap();
        assert_eq!(real.depth(), 1);
        let mut rng = stream(5, &[1, 0]);
        let rem = sample_rem_log(0.4, 20, &mut rng).unwrap();
        assert_eq!(real.log_weights[0], rem);
    }

    #[test]
    fn first_leaf_is_product_of_maxima() {
        let x = m("0.2:0.3,0.6:0.7,1:1");
        let real = sample_grem(&x, 6, 11, DEFAULT_LEAF_CAP).unwrap();
        let top1 = real.log_weights[0][0];
        let top2 = real.log_weights[1][0] - top1;
        let mut rng = stream(11, &[2, 0]);
        assert_abs_diff_eq!(
            top2,
            sample_rem_log(0.7, 6, &mut rng).unwrap()[0],
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(real.leaf_log_weight(0), top1 + top2, epsilon = 1e-12);
    }

    #[test]
    fn leaf_cap_enforced() {
        let x = m("0.2:0.3,0.6:0.7,1:1");
        assert!(matches!(
            sample_grem(&x, 100, 1, 1000),
            Err(Error::TooManyLeaves { .. })
        ));
    }

    #[test]
    fn tree_overlaps_are_ultrametric() {
        let x = m("0.2:0.3,0.6:0.7,1:1");
        let real = sample_grem(&x, 4, 3, DEFAULT_LEAF_CAP).unwrap();
        let q: Vec<Vec<f64>> = (0..16)
            .map(|a| {
                (0..16)
                    .map(|b| if a == b { 1.0 } else { real.overlap(a, b) })
                    .collect()
            })
            .collect();
        assert!(is_ultrametric(&q));
        assert_eq!(real.overlap(0, 1), 0.6);
        assert_eq!(real.overlap(0, 4), 0.2);
    }

    #[test]
    fn constant_boundary_has_no_variance() {
        let x = m("0.3:0.5,1:1");
        let est = mc_functional(
            &x,
            &CovarianceFunction::Linear,
            &BoundaryFunction::Constant(0.7),
            10,
            20,
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(est.estimate(), 0.7, epsilon = 1e-12);
        assert!(est.stderr() < 1e-12);
    }

    #[test]
    fn field_at_first_level_is_shared() {
        // at q = q_1 every leaf sees the same field, so the log-ratio is f(κ(q_1))
        let x = m("0.4:0.5,1:1");
        let (b, b2) =
            functional_sample(&x, &CovarianceFunction::Linear, &|y: f64| y, 0.4, 8, 2, 0).unwrap();
        assert_abs_diff_eq!(b, b2, epsilon = 1e-12);
    }
}
