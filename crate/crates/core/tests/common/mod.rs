#![allow(dead_code)]

use proptest::prelude::*;
use rpclab_core::AtomicMeasure;

/// Sorted, strictly increasing values drawn from `lo..hi` on a `1/den` lattice.
fn lattice_increasing(n: usize, lo: u32, hi: u32) -> impl Strategy<Value = Vec<u32>> {
    proptest::sample::subsequence((lo..hi).collect::<Vec<_>>(), n)
}

/// Measures in `M_a^{<1}` with `k` atoms below one. Positions and masses
/// lie on a dyadic lattice so sums and differences are exact.
pub fn dyadic_measure(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = AtomicMeasure> {
    k.prop_flat_map(|k| (lattice_increasing(k, 0, 64), lattice_increasing(k, 1, 64)))
        .prop_map(|(q, x)| {
            let mut pairs: Vec<(f64, f64)> = q
                .iter()
                .zip(&x)
                .map(|(&a, &b)| (a as f64 / 64.0, b as f64 / 64.0))
                .collect();
            pairs.push((1.0, 1.0));
            AtomicMeasure::new(&pairs).unwrap()
        })
}

/// Any atomic measure (singular or not) on the dyadic lattice.
pub fn dyadic_any(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = AtomicMeasure> {
    (dyadic_measure(k), any::<bool>()).prop_map(|(m, drop_top)| {
        if !drop_top || m.depth() == 0 {
            return m;
        }
        let atoms = m.atoms();
        let mut pairs: Vec<(f64, f64)> = atoms[..atoms.len() - 1].to_vec();
        pairs.last_mut().unwrap().1 = 1.0;
        AtomicMeasure::new(&pairs).unwrap()
    })
}

/// Measures in `M_a^{<1}` with real-valued positions and masses.
pub fn measure(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = AtomicMeasure> {
    k.prop_flat_map(|k| {
        (
            proptest::collection::vec(0.0f64..0.98, k),
            proptest::collection::vec(0.02f64..0.98, k),
        )
    })
    .prop_filter_map("atoms too close", |(mut q, mut x)| {
        q.sort_by(f64::total_cmp);
        x.sort_by(f64::total_cmp);
        let ok =
            q.windows(2).all(|w| w[1] - w[0] > 0.01) && x.windows(2).all(|w| w[1] - w[0] > 0.01);
        if !ok {
            return None;
        }
        let mut pairs: Vec<(f64, f64)> = q.into_iter().zip(x).collect();
        pairs.push((1.0, 1.0));
        AtomicMeasure::new(&pairs).ok()
    })
}

pub fn m(s: &str) -> AtomicMeasure {
    s.parse().unwrap()
}

/// Deterministic uniform stream for tests that draw many instances.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn uniform(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// A measure in `M_a^{<1}` with `k` atoms below one, separated by at
    /// least `gap` in position and mass.
    pub fn measure(&mut self, k: usize, gap: f64) -> AtomicMeasure {
        loop {
            let mut q: Vec<f64> = (0..k).map(|_| self.range(0.0, 0.95)).collect();
            let mut x: Vec<f64> = (0..k).map(|_| self.range(0.05, 0.95)).collect();
            q.sort_by(f64::total_cmp);
            x.sort_by(f64::total_cmp);
            let ok = q.windows(2).all(|w| w[1] - w[0] > gap)
                && x.windows(2).all(|w| w[1] - w[0] > gap)
                && 0.95 - q[k - 1] > 0.0;
            if ok {
                let mut pairs: Vec<(f64, f64)> = q.into_iter().zip(x).collect();
                pairs.push((1.0, 1.0));
                return AtomicMeasure::new(&pairs).unwrap();
            }
        }
    }
}
