//! Monotone interpolation of non-decreasing point sets.
//!
//! Two methods are provided: piecewise-linear chords and monotone piecewise
//! cubic Hermite interpolation (PCHIP) with Fritsch-Carlson derivative
//! selection. Both pass through every knot, never overshoot the knot values,
//! and evaluate as non-decreasing functions; outside the knot span they clamp
//! to the boundary knot values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpolation method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMethod {
    Linear,
    Pchip,
}

impl std::fmt::Display for InterpMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InterpMethod::Linear => write!(f, "linear"),
            InterpMethod::Pchip => write!(f, "pchip"),
        }
    }
}

impl std::str::FromStr for InterpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(InterpMethod::Linear),
            "pchip" => Ok(InterpMethod::Pchip),
            other => Err(Error::Config(format!(
                "unknown interpolation method `{other}` (expected linear|pchip)"
            ))),
        }
    }
}

/// A fitted monotone interpolant over strictly increasing knots.
#[derive(Debug, Clone)]
pub struct MonotoneInterpolant {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Knot derivatives; populated for pchip only.
    ds: Vec<f64>,
    method: InterpMethod,
}

/// Collapse runs of equal `x` to a single point carrying the maximum `y` of
/// the run. Input `x` must be non-decreasing.
pub fn collapse_duplicates(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &(x, y) in points {
        match out.last_mut() {
            Some(last) if last.0 == x => {
                if y > last.1 {
                    last.1 = y;
                }
            }
            _ => out.push((x, y)),
        }
    }
    out
}

/// Fit a monotone interpolant to `(x, y)` points.
///
/// Equal-x runs are collapsed first; after collapsing there must be at least
/// two knots and the `y` values must be non-decreasing.
pub fn fit(points: &[(f64, f64)], method: InterpMethod) -> Result<MonotoneInterpolant> {
    let collapsed = collapse_duplicates(points);
    if collapsed.len() < 2 {
        return Err(Error::Interpolation(format!(
            "need at least 2 distinct x values, got {}",
            collapsed.len()
        )));
    }
    let xs: Vec<f64> = collapsed.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = collapsed.iter().map(|p| p.1).collect();
    for w in xs.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Interpolation(format!(
                "x values must be non-decreasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    for w in ys.windows(2) {
        if w[1] < w[0] {
            return Err(Error::Interpolation(format!(
                "y values must be non-decreasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }

    let ds = match method {
        InterpMethod::Linear => Vec::new(),
        InterpMethod::Pchip => pchip_derivatives(&xs, &ys),
    };
    Ok(MonotoneInterpolant { xs, ys, ds, method })
}

/// Fritsch-Carlson derivative selection for non-decreasing data.
///
/// Interior: zero where the adjacent secants differ in sign or either is
/// zero, otherwise the interval-length-weighted harmonic mean of the two
/// secants. Endpoints: one-sided three-point estimate clamped into
/// `[0, 3 * |end secant|]`.
fn pchip_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();

    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }

    for i in 1..n - 1 {
        let (dl, dr) = (delta[i - 1], delta[i]);
        if dl == 0.0 || dr == 0.0 || (dl > 0.0) != (dr > 0.0) {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / dl + w2 / dr);
        }
    }

    d[0] = endpoint_derivative(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = endpoint_derivative(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// One-sided three-point endpoint rule, clamped to keep the end interval
/// monotone for non-decreasing data.
fn endpoint_derivative(h_end: f64, h_next: f64, delta_end: f64, delta_next: f64) -> f64 {
    let d = ((2.0 * h_end + h_next) * delta_end - h_end * delta_next) / (h_end + h_next);
    d.clamp(0.0, 3.0 * delta_end.abs())
}

impl MonotoneInterpolant {
    pub fn method(&self) -> InterpMethod {
        self.method
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn y_min(&self) -> f64 {
        self.ys[0]
    }

    pub fn y_max(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    /// Evaluate at `x`; values outside the knot span clamp to the boundary
    /// knot values.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        // partition_point returns the first index with xs[i] > x, so the
        // enclosing interval starts at i-1.
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        if x == self.xs[i] {
            return self.ys[i];
        }
        // 2-knot fits degenerate to the chord for both methods, exactly.
        if self.method == InterpMethod::Linear || n == 2 {
            let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
            return self.ys[i] + t * (self.ys[i + 1] - self.ys[i]);
        }
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.ys[i] * h00 + h * self.ds[i] * h10 + self.ys[i + 1] * h01 + h * self.ds[i + 1] * h11
    }
}
