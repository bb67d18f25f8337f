//! Atomic probability measures on `[0, 1]`, identified with their
//! right-continuous distribution functions `x(q)`.
//!
//! A measure with atoms `q_1 < … < q_m` and cumulative masses
//! `x_1 < … < x_m = 1` is stored as the list of pairs `(q_l, x_l)`. It lies
//! in `M_a^{<1}` when its last atom sits at `q = 1`.

mod covariance;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use covariance::{CovarianceFunction, Pchip};

use crate::{Error, Result};

/// Positions closer than this are treated as the same atom.
pub const POSITION_TOL: f64 = 1e-12;
/// Incremental masses at or below this are dropped by canonicalization.
pub const MASS_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
    in_m_lt1: bool,
}

impl AtomicMeasure {
    /// Validates a list of `(position, cumulative mass)` pairs.
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for &(q, x) in pairs {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::PositionOutOfRange(q));
            }
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::InvalidMeasure(alloc::format!(
                    "cumulative mass {x} outside (0, 1]"
                )));
            }
        }
        for w in pairs.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidMeasure("positions not increasing".into()));
            }
            if !(w[1].1 > w[0].1) {
                return Err(Error::InvalidMeasure(
                    "cumulative masses not increasing".into(),
                ));
            }
        }
        let last = pairs[pairs.len() - 1];
        if last.1 != 1.0 {
            return Err(Error::InvalidMeasure(alloc::format!(
                "final cumulative mass is {}, not 1",
                last.1
            )));
        }
        Ok(Self::from_valid(pairs.to_vec()))
    }

    fn from_valid(atoms: Vec<(f64, f64)>) -> Self {
        let in_m_lt1 = atoms[atoms.len() - 1].0 == 1.0;
        Self { atoms, in_m_lt1 }
    }

    /// Builds a measure from `(position, incremental mass)` pairs in any
    /// order, merging coincident positions and dropping empty atoms.
    pub fn from_increments(increments: &[(f64, f64)]) -> Result<Self> {
        let mut v: Vec<(f64, f64)> = Vec::with_capacity(increments.len());
        for &(q, m) in increments {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::PositionOutOfRange(q));
            }
            if m < -MASS_TOL || !m.is_finite() {
                return Err(Error::InvalidMeasure(alloc::format!(
                    "negative mass {m} at {q}"
                )));
            }
            v.push((q, m));
        }
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (q, m) in v {
            match merged.last_mut() {
                Some(last) if (q - last.0).abs() <= POSITION_TOL => last.1 += m,
                _ => merged.push((q, m)),
            }
        }
        merged.retain(|&(_, m)| m > MASS_TOL);
        let total: f64 = merged.iter().map(|p| p.1).sum();
        if merged.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMeasure(alloc::format!(
                "total mass {total} ≠ 1"
            )));
        }
        let mut acc = 0.0;
        let n = merged.len();
        let atoms = merged
            .into_iter()
            .enumerate()
            .map(|(i, (q, m))| {
                acc += m;
                (q, if i + 1 == n { 1.0 } else { acc.min(1.0) })
            })
            .collect();
        Ok(Self::from_valid(atoms))
    }

    /// The Dirac mass at `q`.
    pub fn dirac(q: f64) -> Result<Self> {
        Self::new(&[(q, 1.0)])
    }

    /// `(q_l, x_l)` with cumulative `x_l`.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn in_m_lt1(&self) -> bool {
        self.in_m_lt1
    }

    /// Singular measures have all their mass strictly below `q = 1`.
    pub fn is_singular(&self) -> bool {
        !self.in_m_lt1
    }

    /// `(position, incremental mass)` pairs.
    pub fn increments(&self) -> Vec<(f64, f64)> {
        let mut prev = 0.0;
        self.atoms
            .iter()
            .map(|&(q, x)| {
                let m = x - prev;
                prev = x;
                (q, m)
            })
            .collect()
    }

    /// Atoms strictly below `q = 1`.
    pub fn atoms_below_one(&self) -> &[(f64, f64)] {
        if self.in_m_lt1 {
            &self.atoms[..self.atoms.len() - 1]
        } else {
            &self.atoms
        }
    }

    /// Level structure used by the recursions: positions
    /// `[0, q_1, …, q_K, 1]` and exponents `[0, x_1, …, x_K]`, where `q_l`
    /// ranges over the atoms below 1 and `x_l` is the value of `x(q)` on
    /// `[q_l, q_{l+1})`.
    pub fn levels(&self) -> (Vec<f64>, Vec<f64>) {
        let below = self.atoms_below_one();
        let mut qs = Vec::with_capacity(below.len() + 2);
        let mut xs = Vec::with_capacity(below.len() + 1);
        qs.push(0.0);
        xs.push(0.0);
        for &(q, x) in below {
            qs.push(q);
            xs.push(x);
        }
        qs.push(1.0);
        (qs, xs)
    }

    /// Number of atoms below `q = 1` (the `k` of the level structure).
    pub fn depth(&self) -> usize {
        self.atoms_below_one().len()
    }

    /// `x(q)`.
    pub fn evaluate(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::PositionOutOfRange(q));
        }
        Ok(self.eval_unchecked(q))
    }

    fn eval_unchecked(&self, q: f64) -> f64 {
        let mut v = 0.0;
        for &(a, x) in &self.atoms {
            if a <= q {
                v = x;
            } else {
                break;
            }
        }
        if q >= 1.0 {
            1.0
        } else {
            v
        }
    }

    fn breakpoints(&self, other: &Self) -> Vec<f64> {
        let mut b: Vec<f64> = core::iter::once(0.0)
            .chain(self.atoms.iter().map(|a| a.0))
            .chain(other.atoms.iter().map(|a| a.0))
            .chain(core::iter::once(1.0))
            .collect();
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup();
        b
    }

    /// `∫_0^1 |x(q) - y(q)| g′(q) dq`, exact for any `g` since both
    /// distribution functions are constant between merged breakpoints.
    pub fn l1_distance(&self, other: &Self, g: &CovarianceFunction) -> f64 {
        let b = self.breakpoints(other);
        b.windows(2)
            .map(|w| {
                let d = (self.eval_unchecked(w[0]) - other.eval_unchecked(w[0])).abs();
                d * (g.g(w[1]) - g.g(w[0]))
            })
            .sum()
    }

    /// `x(q) ≥ y(q)` for all `q`.
    pub fn dominates(&self, other: &Self) -> bool {
        self.breakpoints(other)
            .iter()
            .all(|&q| self.eval_unchecked(q) >= other.eval_unchecked(q))
    }

    /// Moves mass `delta` from the atom at `from_q` to `to_q`.
    pub fn transport_mass(&self, delta: f64, from_q: f64, to_q: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Transport(alloc::format!(
                "mass {delta} must be positive"
            )));
        }
        if !(0.0..=1.0).contains(&to_q) {
            return Err(Error::PositionOutOfRange(to_q));
        }
        let mut inc = self.increments();
        let src = inc
            .iter()
            .position(|&(q, _)| (q - from_q).abs() <= POSITION_TOL)
            .ok_or_else(|| Error::Transport(alloc::format!("{from_q} is not an atom")))?;
        if delta > inc[src].1 + MASS_TOL {
            return Err(Error::Transport(alloc::format!(
                "mass {delta} exceeds atom mass {}",
                inc[src].1
            )));
        }
        inc[src].1 = (inc[src].1 - delta).max(0.0);
        inc.push((to_q, delta));
        Self::from_increments(&inc)
    }

    /// Atom-wise comparison with position and mass tolerance `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.atoms.len() == other.atoms.len()
            && self
                .atoms
                .iter()
                .zip(&other.atoms)
                .all(|(a, b)| (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol)
    }
}

impl fmt::Display for AtomicMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (q, x)) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{q}:{x}")?;
        }
        Ok(())
    }
}

impl FromStr for AtomicMeasure {
    type Err = Error;

    /// Parses `"q:x,q:x,…"`.
    fn from_str(s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in s.split(',') {
            let item = item.trim();
            let (q, x) = item.split_once(':').ok_or_else(|| {
                Error::InvalidMeasure(alloc::format!("expected q:x, got {item:?}"))
            })?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidMeasure(alloc::format!("bad number {t:?}")))
            };
            pairs.push((parse(q)?, parse(x)?));
        }
        Self::new(&pairs)
    }
}

impl From<AtomicMeasure> for String {
    fn from(m: AtomicMeasure) -> String {
        alloc::format!("{m}")
    }
}
