//! Ruelle probability cascades: REM point processes, truncated GREM trees,
//! cavity fields, the Bolthausen–Sznitman coalescent and Monte Carlo
//! estimators of cascade functionals.
//!
//! Randomness for Monte Carlo work comes from [`stream`], which derives an
//! independent ChaCha8 generator from a seed and a list of integer keys
//! (sample index, tree node, …). Streams do not depend on the truncation
//! level or on the order in which samples are processed.

mod partition;
mod tree;
pub(crate) use tree::Lse;

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub use partition::{
    bs_step, bs_transition_probability, bs_u, is_ultrametric, overlap_matrix, sample_pair_overlap,
    sample_partition_chain, set_partitions, Partition, PartitionChain, MAX_REPLICAS,
};
pub use tree::{
    functional_sample, mc_functional, mc_functional_at, mc_psi_level, ranked_pair_sample,
    replica_overlap_sample, sample_cavity_field, sample_grem, CascadeRealization, McEstimate,
    DEFAULT_LEAF_CAP,
};

use crate::stats::{ks_p_value, ks_statistic};
use crate::{Error, Result};

#[inline]
pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b).rotate_left(17))
}

/// Independent generator for `(seed, keys…)`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for &k in keys {
        h = mix(h, k);
    }
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix(h.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Key namespaces for [`stream`].
pub mod keys {
    pub const FUNCTIONAL: u64 = 1;
    pub const REPLICAS: u64 = 2;
    pub const RANKED: u64 = 3;
    pub const REM_QS: u64 = 4;
    pub const CHAIN: u64 = 5;
    pub const SK_DISORDER: u64 = 6;
    pub const MULTISTART: u64 = 7;
    pub const FIELD: u64 = 8;
    pub const ROOT: u64 = u64::MAX;
}

fn check_rem_param(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "REM parameter {x} outside (0, 1)"
        )))
    }
}

/// Logarithms of the `n` largest atoms of a Poisson process with intensity
/// `x s^{−x−1} ds`, in decreasing order.
pub fn sample_rem_log<R: Rng + ?Sized>(x: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    check_rem_param(x)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one point".into()));
    }
    let mut e = 0.0;
    Ok((0..n)
        .map(|_| {
            let step: f64 = Exp1.sample(rng);
            e += step;
            -e.ln() / x
        })
        .collect())
}

/// The `n` largest atoms `ζ_i = E_i^{−1/x}` of the REM process, where
/// `E_1 < E_2 < …` are the arrival times of a unit-rate Poisson process.
pub fn sample_rem<R: Rng + ?Sized>(x: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(sample_rem_log(x, n, rng)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// `P(ζ_1 ≤ m) = exp(−m^{−x})`.
pub fn frechet_cdf(x: f64, m: f64) -> f64 {
    if m <= 0.0 {
        0.0
    } else {
        (-m.powf(-x)).exp()
    }
}

/// Positive random multiplier `W` with a known `E[W^x]`.
pub trait ShiftDistribution {
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    /// `E[W^x]`.
    fn moment(&self, x: f64) -> f64;
    fn name(&self) -> &'static str;
}

/// `W ≡ 1`.
#[derive(Debug, Clone, Copy)]
pub struct UnitShift;

impl ShiftDistribution for UnitShift {
    fn sample(&self, _: &mut dyn RngCore) -> f64 {
        1.0
    }
    fn moment(&self, _: f64) -> f64 {
        1.0
    }
    fn name(&self) -> &'static str {
        "unit"
    }
}

/// `W = e^{βZ}` with `Z` standard Gaussian; `E[W^x] = e^{β²x²/2}`.
#[derive(Debug, Clone, Copy)]
pub struct LogNormalShift {
    pub beta: f64,
}

impl ShiftDistribution for LogNormalShift {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        (self.beta * z).exp()
    }
    fn moment(&self, x: f64) -> f64 {
        (0.5 * self.beta * self.beta * x * x).exp()
    }
    fn name(&self) -> &'static str {
        "lognormal"
    }
}

/// `W ∈ {a, b}` with equal probability.
#[derive(Debug, Clone, Copy)]
pub struct TwoPointShift {
    pub a: f64,
    pub b: f64,
}

impl ShiftDistribution for TwoPointShift {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        if rng.random::<bool>() {
            self.a
        } else {
            self.b
        }
    }
    fn moment(&self, x: f64) -> f64 {
        0.5 * (self.a.powf(x) + self.b.powf(x))
    }
    fn name(&self) -> &'static str {
        "two-point"
    }
}

/// Outcome of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
    /// `E[W^x]^{1/x}`.
    pub scale: f64,
    pub level: f64,
    pub passed: bool,
}

/// Tests that `max_i ζ_i W_i / E[W^x]^{1/x}` has the law of `max_i ζ_i`.
/// Each sample uses the `points` largest REM atoms and its own stream.
pub fn check_rem_quasi_stationarity(
    x: f64,
    shift: &dyn ShiftDistribution,
    samples: usize,
    points: usize,
    seed: u64,
) -> Result<KsReport> {
    check_rem_param(x)?;
    let moment = shift.moment(x);
    if !(moment > 0.0 && moment.is_finite()) {
        return Err(Error::InvalidParameter(
            "degenerate shift: E[W^x] must be positive".into(),
        ));
    }
    let scale = moment.powf(1.0 / x);
    let mut maxima: Vec<f64> = (0..samples)
        .map(|s| {
            let mut rng = stream(seed, &[keys::REM_QS, s as u64]);
            let pts = sample_rem_log(x, points, &mut rng).expect("validated");
            pts.iter()
                .map(|&lz| lz + shift.sample(&mut rng).ln())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .map(|lm| (lm - scale.ln()).exp())
        .collect();
    let statistic = ks_statistic(&mut maxima, |m| frechet_cdf(x, m));
    let p_value = ks_p_value(statistic, samples);
    let level = 0.01;
    Ok(KsReport {
        statistic,
        p_value,
        samples,
        scale,
        level,
        passed: p_value > level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rem_is_strictly_decreasing() {
        let mut rng = stream(1, &[]);
        for _ in 0..100 {
            let z = sample_rem(0.4, 50, &mut rng).unwrap();
            assert!(z.windows(2).all(|w| w[0] > w[1]));
        }
        assert!(sample_rem(1.0, 5, &mut rng).is_err());
        assert!(sample_rem(0.5, 0, &mut rng).is_err());
    }

    #[test]
    fn streams_are_keyed() {
        let a: u64 = stream(3, &[1, 2]).next_u64();
        let b: u64 = stream(3, &[1, 2]).next_u64();
        let c: u64 = stream(3, &[2, 1]).next_u64();
        let d: u64 = stream(4, &[1, 2]).next_u64();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn unit_shift_is_exact() {
        let r = check_rem_quasi_stationarity(0.5, &UnitShift, 5000, 50, 9).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.scale, 1.0);
    }

    #[test]
    fn two_point_scale() {
        let s = TwoPointShift { a: 1.0, b: 2.0 };
        let scale = s.moment(0.5).powf(2.0);
        let want = ((1.0 + 2f64.sqrt()) / 2.0).powi(2);
        assert!((scale - want).abs() < 1e-15);
    }
}
