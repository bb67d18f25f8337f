//! Partitions of `{0, …, n-1}` and the Bolthausen–Sznitman coalescent.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use rand::Rng;

use crate::measures::AtomicMeasure;
use crate::{Error, Result};

/// Largest replica count handled by exact enumeration of coarsenings.
pub const MAX_REPLICAS: usize = 6;

/// A set partition stored as canonical block labels: element `i` belongs to
/// block `labels[i]`, and blocks are numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    blocks: usize,
}

impl Partition {
    /// Canonicalizes an arbitrary labelling.
    pub fn from_labels(raw: &[usize]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Partition("of an empty set".into()));
        }
        let mut map: Vec<(usize, usize)> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &r in raw {
            let id = match map.iter().find(|(k, _)| *k == r) {
                Some(&(_, v)) => v,
                None => {
                    map.push((r, map.len()));
                    map.len() - 1
                }
            };
            labels.push(id);
        }
        Ok(Self {
            labels,
            blocks: map.len(),
        })
    }

    /// Builds a partition from explicit blocks covering `0..n` exactly once.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut raw = alloc::vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Partition("has an empty block".into()));
            }
            for &i in block {
                if i >= n || raw[i] != usize::MAX {
                    return Err(Error::Partition(alloc::format!(
                        "element {i} missing, repeated or out of range"
                    )));
                }
                raw[i] = b;
            }
        }
        if raw.contains(&usize::MAX) {
            return Err(Error::Partition("does not cover the set".into()));
        }
        Self::from_labels(&raw)
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            blocks: n,
        }
    }

    pub fn single_block(n: usize) -> Self {
        Self {
            labels: alloc::vec![0; n],
            blocks: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.blocks];
        for (i, &b) in self.labels.iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    /// For a coarsening `self` of `finer`, the number of blocks of `finer`
    /// lumped into each block of `self`; `None` if `self` is not a coarsening.
    pub fn lumping_sizes(&self, finer: &Self) -> Option<Vec<usize>> {
        if self.len() != finer.len() {
            return None;
        }
        // image of each fine block
        let mut image = alloc::vec![usize::MAX; finer.blocks];
        for (i, &fb) in finer.labels.iter().enumerate() {
            let cb = self.labels[i];
            if image[fb] == usize::MAX {
                image[fb] = cb;
            } else if image[fb] != cb {
                return None;
            }
        }
        let mut sizes = alloc::vec![0; self.blocks];
        for &cb in &image {
            sizes[cb] += 1;
        }
        Some(sizes)
    }

    pub fn is_coarsening_of(&self, finer: &Self) -> bool {
        self.lumping_sizes(finer).is_some()
    }

    /// All coarsenings of `self` (including `self`), in a fixed order.
    pub fn coarsenings(&self) -> Vec<Partition> {
        set_partitions(self.blocks)
            .into_iter()
            .map(|merge| {
                let raw: Vec<usize> = self.labels.iter().map(|&b| merge[b]).collect();
                Self::from_labels(&raw).expect("nonempty")
            })
            .collect()
    }
}

/// Restricted growth strings of length `k`: every set partition of `0..k`.
pub fn set_partitions(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = alloc::vec![0usize; k];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=max + 1 {
            cur[i] = v;
            rec(i + 1, max.max(v), cur, out);
        }
    }
    if k == 0 {
        return alloc::vec![Vec::new()];
    }
    // element 0 always opens block 0
    rec(1, 0, &mut cur, &mut out);
    out
}

/// `u(m, r) = (1 − r)(2 − r)⋯(m − 1 − r)`, with `u(1, r) = 1`.
pub fn bs_u(m: usize, r: f64) -> f64 {
    (1..m).map(|j| j as f64 - r).product()
}

/// Probability that the coalescent moves from `gamma_s` to `gamma_t` when
/// the mass parameter shrinks by the factor `ratio = e^{−t}/e^{−s}`:
///
/// `((k_t − 1)!/(k_s − 1)!) · ratio^{k_t − 1} · ∏_blocks u(m_b, ratio)`,
///
/// where `m_b` counts the blocks of `gamma_s` lumped into block `b` of
/// `gamma_t`.
pub fn bs_transition_probability(
    gamma_s: &Partition,
    gamma_t: &Partition,
    ratio: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(alloc::format!(
            "ratio {ratio} outside [0, 1]"
        )));
    }
    let sizes = gamma_t
        .lumping_sizes(gamma_s)
        .ok_or_else(|| Error::Partition("target is not a coarsening of the source".into()))?;
    let (ks, kt) = (gamma_s.num_blocks(), gamma_t.num_blocks());
    // (k_t − 1)!/(k_s − 1)! = 1 / (k_t (k_t + 1) ⋯ (k_s − 1))
    let fact: f64 = (kt..ks).map(|j| j as f64).product();
    let power = if kt == 1 {
        1.0
    } else {
        ratio.powi(kt as i32 - 1)
    };
    let us: f64 = sizes.iter().map(|&m| bs_u(m, ratio)).product();
    Ok(power * us / fact)
}

/// Samples one transition of the coalescent by exact enumeration.
pub fn bs_step<R: Rng + ?Sized>(gamma: &Partition, ratio: f64, rng: &mut R) -> Result<Partition> {
    if gamma.num_blocks() > MAX_REPLICAS {
        return Err(Error::TooLarge("number of blocks", MAX_REPLICAS));
    }
    let options = gamma.coarsenings();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for p in &options {
        acc += bs_transition_probability(gamma, p, ratio)?;
        if u < acc {
            return Ok(p.clone());
        }
    }
    // rounding: fall back to the last option with positive probability
    for p in options.iter().rev() {
        if bs_transition_probability(gamma, p, ratio)? > 0.0 {
            return Ok(p.clone());
        }
    }
    Ok(gamma.clone())
}

/// A sampled chain `Γ_{K+1} = singletons, Γ_K, …, Γ_0 = one block` and the
/// overlap matrix it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionChain {
    /// `partitions[l]` is `Γ_l`.
    pub partitions: Vec<Partition>,
    /// `times[l] = −log x_l` (`+∞` at `l = 0`, `0` at `l = K + 1`).
    pub times: Vec<f64>,
    /// `overlaps[i][j] = q_{max{l+1 : i ∼_l j}}`.
    pub overlaps: Vec<Vec<f64>>,
}

/// Samples the coalescent at the mass levels of `x`: starting from
/// singletons at `x = 1`, each step from `x_{l+1}` down to `x_l` is a
/// transition with ratio `x_l / x_{l+1}`.
pub fn sample_partition_chain<R: Rng + ?Sized>(
    x: &AtomicMeasure,
    n: usize,
    rng: &mut R,
) -> Result<PartitionChain> {
    if n < 2 {
        return Err(Error::InvalidParameter("need at least 2 replicas".into()));
    }
    if n > MAX_REPLICAS {
        return Err(Error::TooLarge("replica count", MAX_REPLICAS));
    }
    let (qs, xs) = x.levels();
    let k = xs.len() - 1;
    let mut mass = xs.clone();
    mass.push(1.0);
    let mut partitions = alloc::vec![Partition::singletons(n); k + 2];
    for l in (0..=k).rev() {
        let ratio = if mass[l + 1] > 0.0 {
            mass[l] / mass[l + 1]
        } else {
            0.0
        };
        partitions[l] = bs_step(&partitions[l + 1], ratio.min(1.0), rng)?;
    }
    let times = mass.iter().map(|&m| -m.ln()).collect();
    let overlaps = overlap_matrix(&partitions, &qs);
    Ok(PartitionChain {
        partitions,
        times,
        overlaps,
    })
}

/// `q_ij = q_{max{l+1 : i ∼_l j}}` for a nested chain `Γ_0 ⊒ … ⊒ Γ_{K+1}`
/// and level positions `qs = [0, q_1, …, q_K, 1]`.
pub fn overlap_matrix(partitions: &[Partition], qs: &[f64]) -> Vec<Vec<f64>> {
    let n = partitions[0].len();
    let top = partitions.len() - 1;
    let mut q = alloc::vec![alloc::vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                q[i][j] = 1.0;
                continue;
            }
            let l = (0..top)
                .rev()
                .find(|&l| partitions[l].same_block(i, j))
                .unwrap_or(0);
            q[i][j] = qs[l + 1];
        }
    }
    q
}

/// `q_ij ≥ min(q_ik, q_jk)` for all triples.
pub fn is_ultrametric(q: &[Vec<f64>]) -> bool {
    let n = q.len();
    (0..n).all(|i| (0..n).all(|j| (0..n).all(|k| q[i][j] >= q[i][k].min(q[j][k]) - 1e-15)))
}

/// Draws `q_12` directly from `P(q_12 = q_l) = x_l − x_{l−1}`, including
/// `q = 1` with probability `1 − x_K`.
pub fn sample_pair_overlap<R: Rng + ?Sized>(x: &AtomicMeasure, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    for &(q, c) in x.atoms() {
        if u < c {
            return q;
        }
    }
    1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bell_numbers() {
        let counts: Vec<usize> = (1..=6).map(|k| set_partitions(k).len()).collect();
        assert_eq!(counts, [1, 2, 5, 15, 52, 203]);
    }

    #[test]
    fn two_block_probabilities() {
        let s = Partition::singletons(2);
        for r in [0.2, 0.5, 0.8] {
            assert_abs_diff_eq!(
                bs_transition_probability(&s, &s, r).unwrap(),
                r,
                epsilon = 1e-15
            );
            let one = Partition::single_block(2);
            assert_abs_diff_eq!(
                bs_transition_probability(&s, &one, r).unwrap(),
                1.0 - r,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn coarsening_probabilities_sum_to_one() {
        for n in 1..=5 {
            let s = Partition::singletons(n);
            for r in [0.0, 0.2, 0.5, 0.8, 1.0] {
                let total: f64 = s
                    .coarsenings()
                    .iter()
                    .map(|t| bs_transition_probability(&s, t, r).unwrap())
                    .sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn three_block_merge_law() {
        // P(all three merge) = (2 − r)(1 − r)/2
        let s = Partition::singletons(3);
        let one = Partition::single_block(3);
        let r = 0.3;
        assert_abs_diff_eq!(
            bs_transition_probability(&s, &one, r).unwrap(),
            (2.0 - r) * (1.0 - r) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rejects_non_coarsening() {
        let a = Partition::from_labels(&[0, 0, 1]).unwrap();
        let b = Partition::from_labels(&[0, 1, 1]).unwrap();
        assert!(bs_transition_probability(&a, &b, 0.5).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::from_blocks(3, &[alloc::vec![0, 1], alloc::vec![2]]).is_ok());
        assert!(Partition::from_blocks(3, &[alloc::vec![0, 1]]).is_err());
        assert!(Partition::from_blocks(3, &[alloc::vec![0, 1], alloc::vec![1, 2]]).is_err());
        assert_eq!(
            Partition::from_labels(&[7, 3, 7]).unwrap().labels(),
            &[0, 1, 0]
        );
    }
}
