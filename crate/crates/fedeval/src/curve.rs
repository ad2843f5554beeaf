//! ROC and PR curve assembly, both exact (from raw scores) and estimated
//! (from quantile-profile ECDFs).
//!
//! Estimated curves sweep a descending threshold grid through the class
//! ECDFs; exact curves use the classic sort-and-sweep construction with tied
//! scores processed as one threshold.

use serde::{Deserialize, Serialize};

use crate::data::{LabeledScores, ScoreRange};
use crate::error::{Error, Result};
use crate::interpolate::{self, InterpMethod, MonotoneInterpolant};
use crate::quantile::QuantileProfile;

/// Which curve a point list describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CurveKind {
    Roc,
    Pr,
}

impl std::fmt::Display for CurveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveKind::Roc => write!(f, "ROC"),
            CurveKind::Pr => write!(f, "PR"),
        }
    }
}

/// Denominator strategy for estimated PR curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrStrategy {
    /// Per-class histograms for numerator and denominator.
    Separate,
    /// All-scores histogram approximates the denominator.
    Combine,
}

impl std::fmt::Display for PrStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrStrategy::Separate => write!(f, "separate"),
            PrStrategy::Combine => write!(f, "combine"),
        }
    }
}

impl std::str::FromStr for PrStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separate" => Ok(PrStrategy::Separate),
            "combine" => Ok(PrStrategy::Combine),
            other => Err(Error::Config(format!(
                "unknown PR strategy `{other}` (expected separate|combine)"
            ))),
        }
    }
}

/// Provenance carried alongside curve points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    /// "exact", "eq", "sa", or "ddp".
    pub mode: String,
    pub q: Option<usize>,
    pub epsilon: Option<f64>,
    pub strategy: Option<PrStrategy>,
    pub interp: Option<InterpMethod>,
    /// Estimated (or exact) class counts behind the curve.
    pub n_pos: f64,
    pub n_neg: f64,
    /// Number of precision values clipped into [0, 1].
    pub clip_events: u64,
}

/// Ordered `(x, y)` points of a reconstructed or exact curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    /// True when the points carry right-end constant (step) semantics, as
    /// the exact PR curve does.
    pub step_semantics: bool,
    pub meta: CurveMeta,
}

impl CurveEstimate {
    /// CSV rendering: `# key=value` metadata comments, then `x,y` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# kind={}\n", self.kind));
        out.push_str(&format!("# mode={}\n", self.meta.mode));
        if let Some(q) = self.meta.q {
            out.push_str(&format!("# q={q}\n"));
        }
        if let Some(eps) = self.meta.epsilon {
            out.push_str(&format!("# epsilon={eps}\n"));
        }
        if let Some(s) = self.meta.strategy {
            out.push_str(&format!("# strategy={s}\n"));
        }
        if let Some(i) = self.meta.interp {
            out.push_str(&format!("# interp={i}\n"));
        }
        out.push_str(&format!(
            "# n_pos={}\n# n_neg={}\n# clip_events={}\n",
            self.meta.n_pos, self.meta.n_neg, self.meta.clip_events
        ));
        out.push_str("x,y\n");
        for (x, y) in &self.points {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serialization cannot fail")
    }
}

/// An ECDF reconstructed from a quantile profile.
#[derive(Debug, Clone)]
pub struct Ecdf {
    interp: MonotoneInterpolant,
}

impl Ecdf {
    /// Cumulative probability of scores at or below `s`, clamped to [0, 1].
    pub fn eval(&self, s: f64) -> f64 {
        self.interp.eval(s).clamp(0.0, 1.0)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.interp.x_min(), self.interp.x_max())
    }
}

/// Fit an ECDF through `(value, level)` profile points, collapsing duplicate
/// values to the highest level.
pub fn build_ecdf(profile: &QuantileProfile, method: InterpMethod) -> Result<Ecdf> {
    let interp = interpolate::fit(&profile.points(), method)?;
    Ok(Ecdf { interp })
}

/// False and true positive rates at threshold `s`:
/// `F = 1 - ecdf_neg(s)`, `T = 1 - ecdf_pos(s)`.
pub fn fpr_tpr(ecdf_neg: &Ecdf, ecdf_pos: &Ecdf, s: f64) -> (f64, f64) {
    let f = (1.0 - ecdf_neg.eval(s)).clamp(0.0, 1.0);
    let t = (1.0 - ecdf_pos.eval(s)).clamp(0.0, 1.0);
    (f, t)
}

/// Precision from rates and class counts, with `P = 1` when no example is
/// predicted positive (the PR curve's starting convention).
pub fn precision(t: f64, f: f64, n_pos: f64, n_neg: f64) -> f64 {
    let num = t * n_pos;
    let den = t * n_pos + f * n_neg;
    if den <= 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Build the descending evaluation threshold grid: both profiles' quantile
/// values, the range endpoints, and a uniform grid of `density` points.
pub fn threshold_grid(range: ScoreRange, profiles: &[&QuantileProfile], density: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(density + profiles.iter().map(|p| p.len()).sum::<usize>() + 2);
    grid.push(range.lo);
    grid.push(range.hi);
    for p in profiles {
        grid.extend_from_slice(&p.values);
    }
    if density >= 2 {
        let step = range.width() / (density - 1) as f64;
        for i in 0..density {
            grid.push(range.lo + step * i as f64);
        }
    }
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap()); // descending
    grid.dedup();
    grid
}

/// Estimated ROC curve over the given descending threshold grid.
///
/// Endpoints (0,0) and (1,1) are appended and the TPR series is monotonized
/// by a running max to absorb sub-resolution interpolation jitter.
pub fn roc_estimate(ecdf_neg: &Ecdf, ecdf_pos: &Ecdf, grid: &[f64], meta: CurveMeta) -> CurveEstimate {
    let mut points = Vec::with_capacity(grid.len() + 2);
    points.push((0.0, 0.0));
    for &s in grid {
        points.push(fpr_tpr(ecdf_neg, ecdf_pos, s));
    }
    points.push((1.0, 1.0));
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best_t = 0.0f64;
    for p in &mut points {
        best_t = best_t.max(p.1);
        p.1 = best_t;
    }
    points.dedup();
    CurveEstimate {
        kind: CurveKind::Roc,
        points,
        step_semantics: false,
        meta,
    }
}

/// Estimated PR curve with the separate strategy: numerator and denominator
/// both come from the per-class ECDFs, so precision lies in [0, 1] without
/// clipping (the clip counter stays untouched and is asserted zero in tests).
pub fn pr_estimate_separate(
    ecdf_neg: &Ecdf,
    ecdf_pos: &Ecdf,
    n_pos: f64,
    n_neg: f64,
    grid: &[f64],
    mut meta: CurveMeta,
) -> CurveEstimate {
    let mut points = Vec::with_capacity(grid.len());
    for &s in grid {
        let (f, t) = fpr_tpr(ecdf_neg, ecdf_pos, s);
        points.push((t, precision(t, f, n_pos, n_neg)));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    points.dedup();
    meta.strategy = Some(PrStrategy::Separate);
    CurveEstimate {
        kind: CurveKind::Pr,
        points,
        step_semantics: false,
        meta,
    }
}

/// Estimated PR curve with the combine strategy: the denominator comes from
/// the all-scores ECDF, `P = T n+ / ((1 - ecdf_all) n)`, clipped into [0, 1]
/// with every clip counted.
pub fn pr_estimate_combine(
    ecdf_all: &Ecdf,
    ecdf_pos: &Ecdf,
    n_all: f64,
    n_pos: f64,
    grid: &[f64],
    mut meta: CurveMeta,
) -> CurveEstimate {
    let mut clip_events = 0u64;
    let mut points = Vec::with_capacity(grid.len());
    for &s in grid {
        let t = (1.0 - ecdf_pos.eval(s)).clamp(0.0, 1.0);
        let den = (1.0 - ecdf_all.eval(s)).clamp(0.0, 1.0) * n_all;
        let num = t * n_pos;
        let p = if den <= 0.0 {
            if num > 0.0 {
                clip_events += 1;
            }
            1.0
        } else {
            let raw = num / den;
            if raw > 1.0 {
                clip_events += 1;
                1.0
            } else {
                raw.max(0.0)
            }
        };
        points.push((t, p));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    points.dedup();
    meta.strategy = Some(PrStrategy::Combine);
    meta.clip_events = clip_events;
    CurveEstimate {
        kind: CurveKind::Pr,
        points,
        step_semantics: false,
        meta,
    }
}

/// Records sorted by descending score, grouped into tied-score sweeps.
fn descending_sweep(data: &LabeledScores) -> Result<Vec<(usize, usize)>> {
    if !data.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let mut sorted: Vec<(f64, bool)> = data
        .records()
        .iter()
        .map(|r| (r.score, r.label.is_positive()))
        .collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        let mut tp = 0usize;
        let mut fp = 0usize;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        groups.push((tp, fp));
    }
    Ok(groups)
}

/// Exact ROC breakpoints: descending-score sweep with tied scores processed
/// as one threshold; linear interpolation applies between points.
pub fn exact_roc(data: &LabeledScores) -> Result<CurveEstimate> {
    let groups = descending_sweep(data)?;
    let (np, nn) = (data.n_pos() as f64, data.n_neg() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (dtp, dfp) in groups {
        tp += dtp;
        fp += dfp;
        points.push((fp as f64 / nn, tp as f64 / np));
    }
    Ok(CurveEstimate {
        kind: CurveKind::Roc,
        points,
        step_semantics: false,
        meta: CurveMeta {
            mode: "exact".into(),
            n_pos: np,
            n_neg: nn,
            ..CurveMeta::default()
        },
    })
}

/// Exact PR breakpoints with right-end constant (step) semantics, anchored
/// at (0, 1) and ending at (1, n+/n).
pub fn exact_pr(data: &LabeledScores) -> Result<CurveEstimate> {
    let groups = descending_sweep(data)?;
    let (np, nn) = (data.n_pos() as f64, data.n_neg() as f64);
    let mut points = vec![(0.0, 1.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (dtp, dfp) in groups {
        tp += dtp;
        fp += dfp;
        points.push((tp as f64 / np, tp as f64 / (tp + fp) as f64));
    }
    Ok(CurveEstimate {
        kind: CurveKind::Pr,
        points,
        step_semantics: true,
        meta: CurveMeta {
            mode: "exact".into(),
            n_pos: np,
            n_neg: nn,
            ..CurveMeta::default()
        },
    })
}
