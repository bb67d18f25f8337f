//! Uniform grids on a symmetric interval and piecewise-cubic Hermite
//! interpolation of sampled functions.

use alloc::vec::Vec;
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

/// Uniform nodes `y_j = -Y + j·dy`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    half_width: f64,
    n: usize,
    dy: f64,
}

impl UniformGrid {
    pub fn new(half_width: f64, n: usize) -> Self {
        assert!(n >= 5, "grid needs at least 5 nodes");
        assert!(half_width > 0.0 && half_width.is_finite());
        Self {
            half_width,
            n,
            dy: 2.0 * half_width / (n - 1) as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.dy
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dy
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.node(j))
    }
}

/// Samples of a function on a [`UniformGrid`] together with node slopes.
///
/// Slopes come from fourth-order finite differences and are optionally
/// clipped to `[-bound, bound]`, which keeps a Lipschitz bound of the sampled
/// function in its interpolant. Outside the grid the function is continued
/// linearly with the edge slope.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: UniformGrid,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: UniformGrid, values: Vec<f64>, slope_bound: Option<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        let slopes = fd_slopes(&values, grid.spacing(), slope_bound);
        Self {
            grid,
            values,
            slopes,
        }
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn<F: FnMut(f64) -> f64>(
        grid: UniformGrid,
        mut f: F,
        slope_bound: Option<f64>,
    ) -> Self {
        let values = grid.nodes().map(&mut f).collect();
        Self::new(grid, values, slope_bound)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn eval(&self, y: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        let t = (y + g.half_width) / g.dy;
        if t <= 0.0 {
            return self.values[0] + self.slopes[0] * (y - g.node(0));
        }
        if t >= (n - 1) as f64 {
            return self.values[n - 1] + self.slopes[n - 1] * (y - g.node(n - 1));
        }
        let j = (t.floor() as usize).min(n - 2);
        let s = t - j as f64;
        let (p0, p1) = (self.values[j], self.values[j + 1]);
        let (m0, m1) = (self.slopes[j] * g.dy, self.slopes[j + 1] * g.dy);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * p1
            + (s3 - s2) * m1
    }

    /// Derivative of the interpolant.
    pub fn derivative(&self, y: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        let t = (y + g.half_width) / g.dy;
        if t <= 0.0 {
            return self.slopes[0];
        }
        if t >= (n - 1) as f64 {
            return self.slopes[n - 1];
        }
        let j = (t.floor() as usize).min(n - 2);
        let s = t - j as f64;
        let (p0, p1) = (self.values[j], self.values[j + 1]);
        let (m0, m1) = (self.slopes[j] * g.dy, self.slopes[j + 1] * g.dy);
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * p0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * p1
            + (3.0 * s2 - 2.0 * s) * m1)
            / g.dy
    }
}

fn fd_slopes(v: &[f64], h: f64, bound: Option<f64>) -> Vec<f64> {
    let n = v.len();
    let mut d = alloc::vec![0.0; n];
    for j in 2..n - 2 {
        d[j] = (v[j - 2] - 8.0 * v[j - 1] + 8.0 * v[j + 1] - v[j + 2]) / (12.0 * h);
    }
    // one-sided fourth-order stencils at the edges
    d[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h);
    d[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * h);
    d[n - 2] = (3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4] - v[n - 5])
        / (12.0 * h);
    d[n - 1] = (25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4]
        + 3.0 * v[n - 5])
        / (12.0 * h);
    if let Some(c) = bound {
        for s in &mut d {
            *s = s.clamp(-c, c);
        }
    }
    d
}
