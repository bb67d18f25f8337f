//! Joint expectations of several backward-field replicas.
//!
//! Given the coalescent chain `Γ_0 ⊒ … ⊒ Γ_{K+1}` of `n` replicas, the
//! replicas share the backward path up to the level where they separate.
//! The conditional expectation of `∏ φ_m(κ̃_m(1))` is evaluated bottom-up:
//!
//! ```text
//! H^{(l)}_c(y) = E_tilt[ ∏_{c′ ⊂ c, c′ ∈ Γ_{l+1}} H^{(l+1)}_{c′}(y + δ) ],
//! ```
//!
//! with one tilted Gaussian step per block, and the answer is `H^{(0)}(0)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

use crate::cascade::{bs_transition_probability, Partition, MAX_REPLICAS};
use crate::grid::GridFunction;
use crate::parisi::{solve_psi_extended, BoundaryFunction, GridSpec, PsiSolution};
use crate::{AtomicMeasure, CovarianceFunction, Error, Result};

use super::tilted_mean;

/// Test function applied to one replica's endpoint field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LeafFunction {
    One,
    /// `ψ′`
    First,
    /// `ψ″ + ψ′²`
    Curvature,
}

impl LeafFunction {
    fn eval(self, psi: &BoundaryFunction, y: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::First => psi.first(y),
            Self::Curvature => {
                let d = psi.first(y);
                psi.second(y) + d * d
            }
        }
    }
}

/// A conjunction of constraints `q_{ab} = q_level` (level indices `1..=K+1`,
/// where `K + 1` means the two replicas sit on the same leaf).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverlapEvent {
    pub constraints: Vec<(usize, usize, usize)>,
}

impl OverlapEvent {
    pub fn new(constraints: &[(usize, usize, usize)]) -> Self {
        Self {
            constraints: constraints.to_vec(),
        }
    }

    pub fn holds(&self, chain: &[Partition]) -> bool {
        self.constraints
            .iter()
            .all(|&(a, b, l)| overlap_level(chain, a, b) == l)
    }
}

/// `max{l + 1 : a ∼_l b}`.
fn overlap_level(chain: &[Partition], a: usize, b: usize) -> usize {
    let top = chain.len() - 1;
    (0..top)
        .rev()
        .find(|&l| chain[l].same_block(a, b))
        .unwrap_or(0)
        + 1
}

fn ratios(xs: &[f64]) -> Vec<f64> {
    let k = xs.len() - 1;
    (0..=k)
        .map(|l| {
            let above = if l == k { 1.0 } else { xs[l + 1] };
            if above > 0.0 {
                (xs[l] / above).min(1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Probability of a chain `Γ_0, …, Γ_{K+1}` under the coalescent run at the
/// level exponents `xs = [0, x_1, …, x_K]`.
pub fn chain_probability(xs: &[f64], chain: &[Partition]) -> Result<f64> {
    if chain.len() != xs.len() + 1 {
        return Err(Error::InvalidParameter("chain length must be K + 2".into()));
    }
    let r = ratios(xs);
    let mut p = 1.0;
    for l in 0..xs.len() {
        if !chain[l].is_coarsening_of(&chain[l + 1]) {
            return Ok(0.0);
        }
        p *= bs_transition_probability(&chain[l + 1], &chain[l], r[l])?;
    }
    Ok(p)
}

/// Every chain of positive probability for `n` replicas, with its
/// probability.
pub fn enumerate_chains(xs: &[f64], n: usize) -> Result<Vec<(Vec<Partition>, f64)>> {
    if n == 0 || n > MAX_REPLICAS {
        return Err(Error::TooLarge("replica count", MAX_REPLICAS));
    }
    let k = xs.len() - 1;
    let r = ratios(xs);
    let mut out = Vec::new();
    let mut chain = alloc::vec![Partition::singletons(n); k + 2];
    descend(k, &r, &mut chain, 1.0, &mut out)?;
    Ok(out)
}

fn descend(
    l: usize,
    r: &[f64],
    chain: &mut Vec<Partition>,
    p: f64,
    out: &mut Vec<(Vec<Partition>, f64)>,
) -> Result<()> {
    for next in chain[l + 1].coarsenings() {
        let t = bs_transition_probability(&chain[l + 1], &next, r[l])?;
        if t <= 0.0 {
            continue;
        }
        chain[l] = next;
        if l == 0 {
            out.push((chain.clone(), p * t));
        } else {
            descend(l - 1, r, chain, p * t, out)?;
        }
    }
    Ok(())
}

struct Evaluator<'a> {
    sol: &'a PsiSolution,
    leaves: &'a [LeafFunction],
    cache: BTreeMap<Vec<usize>, GridFunction>,
}

impl<'a> Evaluator<'a> {
    /// Key: level, block members, then the restricted chain above.
    fn key(&self, chain: &[Partition], l: usize, block: &[usize]) -> Vec<usize> {
        let mut key = alloc::vec![l];
        key.extend_from_slice(block);
        for p in &chain[l + 1..] {
            key.push(usize::MAX);
            let raw: Vec<usize> = block.iter().map(|&i| p.labels()[i]).collect();
            key.extend(
                Partition::from_labels(&raw)
                    .expect("nonempty")
                    .labels()
                    .iter(),
            );
        }
        key
    }

    fn children(chain: &[Partition], l: usize, block: &[usize]) -> Vec<Vec<usize>> {
        chain[l + 1]
            .blocks()
            .into_iter()
            .filter(|b| block.contains(&b[0]))
            .collect()
    }

    /// `∏_{children} H^{(l+1)}(u)` as a closure input.
    fn child_product(&mut self, chain: &[Partition], l: usize, block: &[usize]) -> Vec<ChildFn> {
        let k = self.sol.depth();
        Self::children(chain, l, block)
            .into_iter()
            .map(|c| {
                if l == k {
                    ChildFn::Leaf(self.leaves[c[0]])
                } else {
                    ChildFn::Grid(self.block(chain, l + 1, &c))
                }
            })
            .collect()
    }

    fn block(&mut self, chain: &[Partition], l: usize, block: &[usize]) -> GridFunction {
        let key = self.key(chain, l, block);
        if let Some(g) = self.cache.get(&key) {
            return g.clone();
        }
        let kids = self.child_product(chain, l, block);
        let sol = self.sol;
        let gs = sol.g_values();
        let sigma = (gs[l + 1] - gs[l]).max(0.0).sqrt();
        let psi = sol.boundary();
        let prod = |u: f64| kids.iter().map(|c| c.eval(psi, u)).product::<f64>();
        let g = GridFunction::from_fn(
            *sol.spatial_grid(),
            |y| tilted_mean(sol, l, y, sigma, &prod),
            None,
        );
        self.cache.insert(key, g.clone());
        g
    }

    fn root(&mut self, chain: &[Partition]) -> f64 {
        let n = self.leaves.len();
        let all: Vec<usize> = (0..n).collect();
        let kids = self.child_product(chain, 0, &all);
        let sol = self.sol;
        let gs = sol.g_values();
        let sigma = (gs[1] - gs[0]).max(0.0).sqrt();
        let psi = sol.boundary();
        let prod = |u: f64| kids.iter().map(|c| c.eval(psi, u)).product::<f64>();
        tilted_mean(sol, 0, 0.0, sigma, &prod)
    }
}

enum ChildFn {
    Leaf(LeafFunction),
    Grid(GridFunction),
}

impl ChildFn {
    fn eval(&self, psi: &BoundaryFunction, u: f64) -> f64 {
        match self {
            Self::Leaf(f) => f.eval(psi, u),
            Self::Grid(g) => g.eval(u),
        }
    }
}

/// `E[∏_m φ_m(κ̃_m(1)) · 1_event]` over replicas drawn from the cascade.
pub fn tree_expectation(
    sol: &PsiSolution,
    leaves: &[LeafFunction],
    event: &OverlapEvent,
) -> Result<f64> {
    let n = leaves.len();
    let k1 = sol.depth() + 1;
    for &(a, b, l) in &event.constraints {
        if a >= n || b >= n {
            return Err(Error::IndexOutOfRange {
                index: a.max(b),
                lo: 0,
                hi: n - 1,
            });
        }
        if l == 0 || l > k1 {
            return Err(Error::IndexOutOfRange {
                index: l,
                lo: 1,
                hi: k1,
            });
        }
    }
    let mut ev = Evaluator {
        sol,
        leaves,
        cache: BTreeMap::new(),
    };
    let mut total = 0.0;
    for (chain, p) in enumerate_chains(sol.exponents(), n)? {
        if event.holds(&chain) {
            total += p * ev.root(&chain);
        }
    }
    Ok(total)
}

/// `∂_{q_i}∂_{q_j} P` for `g(q) = q`:
///
/// ```text
/// − (3/2) E[ψ′ψ′ψ′ψ′ ; q_12 = q_i, q_34 = q_j]
/// + 2 E[ψ′ (ψ″+ψ′²) ψ′ ; q_12 = q_i, q_23 = q_j]
/// − (1/2) δ_ij E[(ψ″+ψ′²)(ψ″+ψ′²) ; q_12 = q_i]
/// ```
pub fn second_q_derivative(sol: &PsiSolution, i: usize, j: usize) -> Result<f64> {
    if !sol.covariance().is_linear() {
        return Err(Error::UnsupportedCovariance(sol.covariance().name()));
    }
    let k = sol.depth();
    for idx in [i, j] {
        if idx == 0 || idx > k {
            return Err(Error::IndexOutOfRange {
                index: idx,
                lo: 1,
                hi: k,
            });
        }
    }
    use LeafFunction::{Curvature as V, First as U};
    let u4 = tree_expectation(
        sol,
        &[U, U, U, U],
        &OverlapEvent::new(&[(0, 1, i), (2, 3, j)]),
    )?;
    let u3 = tree_expectation(sol, &[U, V, U], &OverlapEvent::new(&[(0, 1, i), (1, 2, j)]))?;
    let v2 = if i == j {
        tree_expectation(sol, &[V, V], &OverlapEvent::new(&[(0, 1, i)]))?
    } else {
        0.0
    };
    Ok(-1.5 * u4 + 2.0 * u3 - 0.5 * v2)
}

/// [`second_q_derivative`] for the SK boundary `log cosh(βy + h)`.
pub fn second_q_derivative_sk(
    x: &AtomicMeasure,
    beta: f64,
    h: f64,
    i: usize,
    j: usize,
    spec: &GridSpec,
) -> Result<f64> {
    let sol = solve_psi_extended(
        x,
        &CovarianceFunction::Linear,
        &BoundaryFunction::LogCosh { beta, h },
        spec,
    )?;
    second_q_derivative(&sol, i, j)
}
