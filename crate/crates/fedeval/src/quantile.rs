//! Quantile extraction from hierarchical histograms and from raw scores.
//!
//! A profile holds `Q` score values at the evenly spaced cumulative levels
//! `k / (Q - 1)`, including both endpoints so downstream ECDF interpolation
//! is anchored at 0 and 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::HierHistogram;

/// Monotone score values at evenly spaced ECDF levels for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileProfile {
    /// Cumulative probability levels `k / (Q - 1)`.
    pub levels: Vec<f64>,
    /// Non-decreasing score values, one per level, inside the score range.
    pub values: Vec<f64>,
    /// Estimated record count, floored at 1.
    pub total: f64,
}

impl QuantileProfile {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `(value, level)` pairs ready for ECDF fitting.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.values
            .iter()
            .copied()
            .zip(self.levels.iter().copied())
            .collect()
    }
}

fn level_grid(q: usize) -> Vec<f64> {
    (0..q).map(|k| k as f64 / (q - 1) as f64).collect()
}

/// Estimated record count behind a tree: the leaf-level sum, floored at 1 so
/// later precision denominators stay positive.
pub fn estimate_total(tree: &HierHistogram) -> f64 {
    tree.total().max(1.0)
}

/// Extract `q >= 2` evenly spaced quantiles from a (possibly noisy,
/// consistency-processed) histogram.
///
/// The cumulative prefix at every leaf edge is computed by the hierarchical
/// decomposition, clipped below at zero, and made monotone by a running max;
/// each target rank is then located in the first leaf whose cumulative
/// reaches it and placed by linear interpolation of rank within that leaf.
/// A final running max guarantees a monotone profile for arbitrary input.
pub fn estimate_quantiles(tree: &HierHistogram, q: usize) -> Result<QuantileProfile> {
    if q < 2 {
        return Err(Error::InvalidInput(format!(
            "quantile count must be >= 2, got {q}"
        )));
    }
    let config = tree.config();
    let leaves = config.leaves();
    if leaves <= q {
        return Err(Error::InvalidInput(format!(
            "tree resolution b^h = {leaves} must exceed quantile count {q}"
        )));
    }

    // Monotone pseudo-ECDF over leaf edges.
    let mut cum = Vec::with_capacity(leaves + 1);
    let mut running = 0.0f64;
    for idx in 0..=leaves {
        let raw = tree.prefix_count(idx)?.max(0.0);
        running = running.max(raw);
        cum.push(running);
    }

    let total = estimate_total(tree);
    let levels = level_grid(q);
    let mut values = Vec::with_capacity(q);
    let mut floor = config.range.lo;
    for &p in &levels {
        let target = p * total;
        let v = locate_rank(&cum, target, tree);
        floor = floor.max(v);
        values.push(floor.clamp(config.range.lo, config.range.hi));
    }
    Ok(QuantileProfile {
        levels,
        values,
        total,
    })
}

/// Score position of rank `target` given cumulative counts at leaf edges.
fn locate_rank(cum: &[f64], target: f64, tree: &HierHistogram) -> f64 {
    let config = tree.config();
    let leaves = cum.len() - 1;
    if target <= 0.0 {
        // the 0-quantile: left edge of the first nonempty leaf
        let first = (0..leaves).find(|&j| cum[j + 1] > 0.0).unwrap_or(0);
        return config.leaf_edge(first);
    }
    // first leaf whose cumulative reaches the target
    let j = match cum[1..].iter().position(|&c| c >= target) {
        Some(j) => j,
        None => return config.leaf_edge(leaves), // rank beyond all mass
    };
    let mass = cum[j + 1] - cum[j];
    let frac = if mass > 0.0 {
        ((target - cum[j]) / mass).clamp(0.0, 1.0)
    } else {
        0.0
    };
    config.leaf_edge(j) + frac * config.bin_width(config.height)
}

/// Exact quantiles from raw scores: linear interpolation between order
/// statistics at positions `p (n - 1)`.
pub fn exact_quantiles(scores: &[f64], q: usize) -> Result<QuantileProfile> {
    if q < 2 {
        return Err(Error::InvalidInput(format!(
            "quantile count must be >= 2, got {q}"
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput(
            "cannot take quantiles of an empty score set".into(),
        ));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let levels = level_grid(q);
    let values = levels
        .iter()
        .map(|&p| {
            let pos = p * (n - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < n {
                sorted[i] + frac * (sorted[i + 1] - sorted[i])
            } else {
                sorted[n - 1]
            }
        })
        .collect();
    Ok(QuantileProfile {
        levels,
        values,
        total: n as f64,
    })
}
