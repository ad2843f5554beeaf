//! Curve comparison metrics: Area Error, AUC, average precision, and
//! pointwise diagnostics.
//!
//! Curves are evaluated as functions of x over [0, 1] (endpoint-extended);
//! repeated x values resolve to their supremum, so vertical segments are
//! well-defined and contribute nothing to the integrals.

use crate::curve::CurveEstimate;
use crate::error::{Error, Result};

/// Evaluation semantics between breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSemantics {
    /// Straight segments between consecutive points.
    Linear,
    /// Right-end constant steps: y over `(x_{i-1}, x_i]` equals `y_i`.
    StepRight,
}

/// A monotone-x piecewise curve representation supporting evaluation over
/// [0, 1].
#[derive(Debug, Clone)]
pub struct CurveFunction {
    xs: Vec<f64>,
    ys: Vec<f64>,
    semantics: CurveSemantics,
}

impl CurveFunction {
    pub fn from_points(points: &[(f64, f64)], semantics: CurveSemantics) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(
                "a curve needs at least 2 points".into(),
            ));
        }
        for w in points.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(Error::InvalidInput(
                    "curve points must be sorted by non-decreasing x".into(),
                ));
            }
        }
        Ok(Self {
            xs: points.iter().map(|p| p.0).collect(),
            ys: points.iter().map(|p| p.1).collect(),
            semantics,
        })
    }

    /// Linear semantics for estimated parametric curves, steps for exact PR.
    pub fn from_estimate(curve: &CurveEstimate) -> Result<Self> {
        let semantics = if curve.step_semantics {
            CurveSemantics::StepRight
        } else {
            CurveSemantics::Linear
        };
        Self::from_points(&curve.points, semantics)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    /// Evaluate at `x`, extending the end values beyond the breakpoint span.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            // supremum over the trailing repeated x, if any
            let mut y = self.ys[n - 1];
            let mut i = n - 1;
            while i > 0 && self.xs[i - 1] == self.xs[n - 1] {
                i -= 1;
                y = y.max(self.ys[i]);
            }
            return y;
        }
        match self.semantics {
            CurveSemantics::StepRight => {
                // first breakpoint at or beyond x carries the step value
                let i = self.xs.partition_point(|&k| k < x);
                self.ys[i]
            }
            CurveSemantics::Linear => {
                let hi = self.xs.partition_point(|&k| k <= x);
                if self.xs[hi - 1] == x {
                    // supremum over the repeated-x run ending at hi-1
                    let mut y = self.ys[hi - 1];
                    let mut i = hi - 1;
                    while i > 0 && self.xs[i - 1] == x {
                        i -= 1;
                        y = y.max(self.ys[i]);
                    }
                    return y;
                }
                // interpolate from the last point at the left breakpoint to
                // the first point at the right one (the parametric geometry)
                let (x0, y0) = (self.xs[hi - 1], self.ys[hi - 1]);
                let (x1, y1) = (self.xs[hi], self.ys[hi]);
                y0 + (x - x0) / (x1 - x0) * (y1 - y0)
            }
        }
    }
}

/// Trapezoid integral of `|exact(x) - estimate(x)|` over [0, 1] on the union
/// of both curves' breakpoints and a uniform `grid_points` grid.
pub fn area_error(exact: &CurveFunction, estimate: &CurveFunction, grid_points: usize) -> f64 {
    let grid = union_grid(&[exact, estimate], grid_points);
    let mut area = 0.0;
    let mut prev_x = grid[0];
    let mut prev_d = (exact.eval(prev_x) - estimate.eval(prev_x)).abs();
    for &x in &grid[1..] {
        let d = (exact.eval(x) - estimate.eval(x)).abs();
        area += (x - prev_x) * 0.5 * (d + prev_d);
        prev_x = x;
        prev_d = d;
    }
    area
}

fn union_grid(curves: &[&CurveFunction], grid_points: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(grid_points + curves.iter().map(|c| c.xs.len()).sum::<usize>());
    for c in curves {
        grid.extend(c.xs.iter().copied().filter(|x| (0.0..=1.0).contains(x)));
    }
    let g = grid_points.max(2);
    for i in 0..g {
        grid.push(i as f64 / (g - 1) as f64);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

/// Area under a ROC curve by the trapezoidal rule over its own breakpoints.
/// Vertical segments (repeated x) contribute zero width.
pub fn auc_roc(curve: &CurveFunction) -> f64 {
    let mut area = 0.0;
    for i in 1..curve.xs.len() {
        area += (curve.xs[i] - curve.xs[i - 1]) * 0.5 * (curve.ys[i] + curve.ys[i - 1]);
    }
    area
}

/// Average precision: the right-end constant step sum
/// `sum_i (recall_i - recall_{i-1}) * precision_i` over the curve's points.
pub fn average_precision(curve: &CurveFunction) -> f64 {
    let mut ap = 0.0;
    for i in 1..curve.xs.len() {
        ap += (curve.xs[i] - curve.xs[i - 1]) * curve.ys[i];
    }
    ap
}

/// Pointwise absolute differences at the given x values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointErrorSummary {
    pub max: f64,
    pub mean: f64,
}

pub fn abs_point_error(
    exact: &CurveFunction,
    estimate: &CurveFunction,
    xs: &[f64],
) -> PointErrorSummary {
    if xs.is_empty() {
        return PointErrorSummary { max: 0.0, mean: 0.0 };
    }
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for &x in xs {
        let d = (exact.eval(x) - estimate.eval(x)).abs();
        max = max.max(d);
        sum += d;
    }
    PointErrorSummary {
        max,
        mean: sum / xs.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn linear(points: &[(f64, f64)]) -> CurveFunction {
        CurveFunction::from_points(points, CurveSemantics::Linear).unwrap()
    }

    fn dense_parabola() -> CurveFunction {
        let pts: Vec<(f64, f64)> = (0..=4096)
            .map(|i| {
                let x = i as f64 / 4096.0;
                (x, x * x)
            })
            .collect();
        linear(&pts)
    }

    #[test]
    fn identical_curves_have_zero_error() {
        let c = linear(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(area_error(&c, &c, 100), 0.0);
    }

    #[test]
    fn diagonal_vs_parabola_is_one_sixth() {
        let diag = linear(&[(0.0, 0.0), (1.0, 1.0)]);
        let para = dense_parabola();
        let ae = area_error(&diag, &para, 10_000);
        assert!((ae - 1.0 / 6.0).abs() < 1e-4, "ae {ae}");
    }

    #[test]
    fn maximal_discrepancy_is_one() {
        let top = linear(&[(0.0, 1.0), (1.0, 1.0)]);
        let bottom = linear(&[(0.0, 0.0), (1.0, 0.0)]);
        let ae = area_error(&top, &bottom, 100);
        assert!((ae - 1.0).abs() < 1e-12);
    }

    #[test]
    fn area_error_is_symmetric() {
        let a = linear(&[(0.0, 0.0), (0.4, 0.7), (1.0, 1.0)]);
        let b = dense_parabola();
        assert_eq!(area_error(&a, &b, 1000), area_error(&b, &a, 1000));
    }

    #[test]
    fn grid_refinement_is_stable() {
        let a = linear(&[(0.0, 0.0), (0.3, 0.6), (1.0, 1.0)]);
        let b = dense_parabola();
        let coarse = area_error(&a, &b, 10_000);
        let fine = area_error(&a, &b, 20_000);
        assert!((coarse - fine).abs() < 1e-3);
    }

    #[test]
    fn auc_of_diagonal_is_half() {
        let diag = linear(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc_roc(&diag), 0.5);
    }

    #[test]
    fn auc_of_perfect_classifier_is_one() {
        let perfect = linear(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(auc_roc(&perfect), 1.0);
    }

    #[test]
    fn ae_dominates_auc_difference() {
        // |AUC(a) - AUC(b)| = |integral of (a - b)| <= integral of |a - b| = AE
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..100 {
            let a = random_monotone_curve(&mut rng);
            let b = random_monotone_curve(&mut rng);
            let ae = area_error(&a, &b, 2_000);
            let dauc = (auc_roc(&a) - auc_roc(&b)).abs();
            assert!(ae >= dauc - 1e-9, "ae {ae} < dAUC {dauc}");
        }
    }

    fn random_monotone_curve(rng: &mut ChaCha12Rng) -> CurveFunction {
        let k = rng.gen_range(3..12);
        let mut xs: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        xs.push(0.0);
        xs.push(1.0);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        let mut ys: Vec<f64> = xs.iter().map(|_| rng.gen::<f64>()).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pts: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
        linear(&pts)
    }

    #[test]
    fn average_precision_examples() {
        // constant precision 1
        let flat = CurveFunction::from_points(
            &[(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)],
            CurveSemantics::StepRight,
        )
        .unwrap();
        assert_eq!(average_precision(&flat), 1.0);

        // 4-record sweep: recalls 1/3, 2/3, 2/3, 1 with precisions 1, 1, 2/3, 3/4
        let sweep = CurveFunction::from_points(
            &[
                (0.0, 1.0),
                (1.0 / 3.0, 1.0),
                (2.0 / 3.0, 1.0),
                (2.0 / 3.0, 2.0 / 3.0),
                (1.0, 0.75),
            ],
            CurveSemantics::StepRight,
        )
        .unwrap();
        let expect = (1.0 / 3.0) * 1.0 + (1.0 / 3.0) * 1.0 + (1.0 / 3.0) * 0.75;
        assert!((average_precision(&sweep) - expect).abs() < 1e-12);

        // random classifier: flat at n+/n
        let random = CurveFunction::from_points(
            &[(0.0, 0.3), (1.0, 0.3)],
            CurveSemantics::StepRight,
        )
        .unwrap();
        assert!((average_precision(&random) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn step_evaluation_uses_right_end() {
        let step = CurveFunction::from_points(
            &[(0.0, 1.0), (0.5, 1.0), (0.5, 0.4), (1.0, 0.6)],
            CurveSemantics::StepRight,
        )
        .unwrap();
        assert_eq!(step.eval(0.25), 1.0);
        assert_eq!(step.eval(0.5), 1.0); // supremum at the jump
        assert_eq!(step.eval(0.75), 0.6);
    }

    #[test]
    fn linear_evaluation_handles_vertical_segments() {
        let c = linear(&[(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (1.0, 1.0)]);
        assert_eq!(c.eval(0.0), 0.5); // supremum of the vertical run
        assert_eq!(c.eval(0.25), 0.5);
        assert_eq!(c.eval(1.0), 1.0);
        assert_eq!(c.eval(2.0), 1.0); // endpoint extension
        assert_eq!(c.eval(-1.0), 0.0);
    }

    #[test]
    fn point_error_summaries() {
        let a = linear(&[(0.0, 0.0), (1.0, 1.0)]);
        let same = abs_point_error(&a, &a, &[0.0, 0.3, 0.9]);
        assert_eq!(same, PointErrorSummary { max: 0.0, mean: 0.0 });

        let b = linear(&[(0.0, 0.1), (1.0, 1.1)]);
        let off = abs_point_error(&a, &b, &[0.0, 0.25, 0.5]);
        assert!((off.max - 0.1).abs() < 1e-12);
        assert!((off.mean - 0.1).abs() < 1e-12);
    }
}
