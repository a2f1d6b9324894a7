use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Piecewise-linear lookup with flat extrapolation beyond the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    /// Knots must be finite and sorted by strictly increasing abscissa.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::param("table", "needs at least two knots"));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::param("table", "non-finite knot"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::param("table", "knots must be strictly increasing"));
        }
        Ok(Self { knots })
    }

    /// Constant table over `[lo, hi]`.
    pub fn flat(lo: f64, hi: f64, value: f64) -> Self {
        Self {
            knots: vec![(lo, value), (hi, value)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn min_value(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0].0 {
            return k[0].1;
        }
        let last = k[k.len() - 1];
        if x >= last.0 {
            return last.1;
        }
        // first knot strictly greater than x
        let hi = k.partition_point(|p| p.0 <= x);
        let (x0, y0) = k[hi - 1];
        let (x1, y1) = k[hi];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.knots.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}
