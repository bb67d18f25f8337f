use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Covariance profile `g` of the cavity field: `Cov(κ(q), κ(q')) = g(q ∧ q')`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceFunction {
    /// `g(q) = q`.
    Linear,
    /// `g(q) = q²/2`.
    HalfSquare,
    /// Monotone piecewise-cubic interpolant of tabulated samples.
    Tabulated(Pchip),
}

impl CovarianceFunction {
    /// Builds a tabulated profile from `(q, g(q))` samples. The table must
    /// start at `(0, 0)`, end at `q = 1` and be strictly increasing in both
    /// coordinates.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        Pchip::new(samples).map(Self::Tabulated)
    }

    pub fn g(&self, q: f64) -> f64 {
        match self {
            Self::Linear => q,
            Self::HalfSquare => 0.5 * q * q,
            Self::Tabulated(p) => p.eval(q),
        }
    }

    pub fn g_prime(&self, q: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::HalfSquare => q,
            Self::Tabulated(p) => p.derivative(q),
        }
    }

    /// `max_{q∈[0,1]} g′(q)`.
    pub fn max_g_prime(&self) -> f64 {
        match self {
            Self::Linear | Self::HalfSquare => 1.0,
            Self::Tabulated(p) => p.max_derivative(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Linear)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::HalfSquare => "half-square",
            Self::Tabulated(_) => "tabulated",
        }
    }
}

/// Fritsch–Carlson monotone cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl Pchip {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidCovariance(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = samples.iter().cloned().unzip();
        if xs[0] != 0.0 || ys[0] != 0.0 {
            return Err(Error::InvalidCovariance(
                "table must start at (0, 0)".into(),
            ));
        }
        if xs[n - 1] != 1.0 {
            return Err(Error::InvalidCovariance("table must end at q = 1".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) || !(w[1].1 > w[0].1) || !w[1].1.is_finite() {
                return Err(Error::InvalidCovariance(format!(
                    "samples not strictly increasing near q = {}",
                    w[0].0
                )));
            }
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ds = alloc::vec![0.0; n];
        if n == 2 {
            ds[0] = del[0];
            ds[1] = del[0];
        } else {
            for i in 1..n - 1 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                ds[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
            }
            ds[0] = end_slope(h[0], h[1], del[0], del[1]);
            ds[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        let p = Self { xs, ys, ds };
        if p.ds.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidCovariance(
                "fitted spline is not monotone".into(),
            ));
        }
        Ok(p)
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.ds[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.ds[i + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) * (self.ys[i] - self.ys[i + 1]) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * self.ds[i]
            + (3.0 * t2 - 2.0 * t) * self.ds[i + 1]
    }

    /// Exact maximum of the (piecewise quadratic) derivative.
    pub fn max_derivative(&self) -> f64 {
        let mut best = self.ds.iter().cloned().fold(0.0, f64::max);
        for i in 0..self.xs.len() - 1 {
            let h = self.xs[i + 1] - self.xs[i];
            let s = (self.ys[i + 1] - self.ys[i]) / h;
            // d'(t) = a t² + b t + c with the coefficients below
            let a = 3.0 * (self.ds[i] + self.ds[i + 1] - 2.0 * s);
            let b = -2.0 * (2.0 * self.ds[i] + self.ds[i + 1] - 3.0 * s);
            if a != 0.0 {
                let t = -b / (2.0 * a);
                if t > 0.0 && t < 1.0 {
                    best = best.max(self.derivative(self.xs[i] + t * h));
                }
            }
        }
        best
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}
