//! B-ary hierarchical histograms over a score range.
//!
//! A tree of height `h` stores, for each level `i` in `1..=h`, the counts of
//! `b^i` equal-width bins spanning the range. The virtual root (level 0) is
//! neither stored nor transmitted. Counts are kept in `f64`; they are
//! integer-valued by construction until consistency post-processing runs, and
//! integers below 2^53 are exact in `f64`, so the noiseless aggregation
//! invariants hold bit-exactly.

use serde::{Deserialize, Serialize};

use crate::data::ScoreRange;
use crate::error::{Error, Result};

/// Tree geometry: branching factor, height, and the covered score range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub branching: usize,
    pub height: usize,
    pub range: ScoreRange,
}

impl TreeConfig {
    pub fn new(branching: usize, height: usize, range: ScoreRange) -> Result<Self> {
        if branching < 2 {
            return Err(Error::InvalidInput(format!(
                "branching factor must be >= 2, got {branching}"
            )));
        }
        if height < 1 {
            return Err(Error::InvalidInput("tree height must be >= 1".into()));
        }
        // Reject geometries whose leaf count would not fit in addressable memory.
        let leaves = (branching as f64).powi(height as i32);
        if leaves > 1e9 {
            return Err(Error::InvalidInput(format!(
                "b^h = {leaves:.0} leaves is unreasonably large"
            )));
        }
        Ok(Self {
            branching,
            height,
            range,
        })
    }

    /// Number of bins at 1-based level `i`.
    pub fn bins_at(&self, level: usize) -> usize {
        self.branching.pow(level as u32)
    }

    /// Leaf count `b^h`.
    pub fn leaves(&self) -> usize {
        self.bins_at(self.height)
    }

    /// Total stored bins across all levels: `b + b^2 + ... + b^h`.
    pub fn total_bins(&self) -> usize {
        let b = self.branching;
        (1..=self.height).map(|i| b.pow(i as u32)).sum()
    }

    /// Bin width at level `i`.
    pub fn bin_width(&self, level: usize) -> f64 {
        self.range.width() / self.bins_at(level) as f64
    }

    /// Index of the bin containing `score` at level `i`.
    ///
    /// Bins are right-open except the last, which is right-closed, so every
    /// in-range score maps to exactly one bin.
    pub fn bin_index(&self, level: usize, score: f64) -> usize {
        let bins = self.bins_at(level);
        let rel = (score - self.range.lo) / self.range.width();
        ((rel * bins as f64) as usize).min(bins - 1)
    }

    /// Score of the left edge of leaf `index` (index may equal `b^h`, giving
    /// the right end of the range).
    pub fn leaf_edge(&self, index: usize) -> f64 {
        if index == self.leaves() {
            self.range.hi
        } else {
            self.range.lo + self.bin_width(self.height) * index as f64
        }
    }
}

/// Choose the tree height for `quantiles` evenly spaced quantiles:
/// `h = ceil(log_b Q) + c`, which guarantees `b^h > Q`.
pub fn height_for(quantiles: usize, branching: usize, slack: usize) -> Result<usize> {
    if quantiles < 2 {
        return Err(Error::InvalidInput(format!(
            "quantile count must be >= 2, got {quantiles}"
        )));
    }
    if branching < 2 {
        return Err(Error::InvalidInput(format!(
            "branching factor must be >= 2, got {branching}"
        )));
    }
    // Integer ceil(log_b Q) avoids float log edge cases at exact powers.
    let mut h = 0usize;
    let mut capacity = 1usize;
    while capacity < quantiles {
        capacity = capacity.saturating_mul(branching);
        h += 1;
    }
    Ok((h + slack).max(1))
}

/// Dense per-level counts forming one hierarchical histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierHistogram {
    config: TreeConfig,
    /// `levels[i - 1]` holds the `b^i` counts of level `i`.
    levels: Vec<Vec<f64>>,
    /// False once noise or post-processing has produced non-integer counts.
    integral: bool,
}

impl HierHistogram {
    /// All-zero histogram.
    pub fn zeros(config: TreeConfig) -> Self {
        let levels = (1..=config.height)
            .map(|i| vec![0.0; config.bins_at(i)])
            .collect();
        Self {
            config,
            levels,
            integral: true,
        }
    }

    /// Bin the given scores at every level.
    pub fn build(scores: &[f64], config: TreeConfig) -> Result<Self> {
        let mut tree = Self::zeros(config);
        for &s in scores {
            if !s.is_finite() || !config.range.contains(s) {
                return Err(Error::ScoreOutOfRange {
                    score: s,
                    lo: config.range.lo,
                    hi: config.range.hi,
                    row: 0,
                });
            }
            for level in 1..=config.height {
                tree.levels[level - 1][config.bin_index(level, s)] += 1.0;
            }
        }
        Ok(tree)
    }

    /// Reconstruct a full tree from leaf counts alone, summing children to
    /// form each internal level. Used on the server side when only leaves
    /// were transmitted.
    pub fn from_leaves(leaves: Vec<f64>, config: TreeConfig) -> Result<Self> {
        if leaves.len() != config.leaves() {
            return Err(Error::ConfigMismatch(format!(
                "expected {} leaves, got {}",
                config.leaves(),
                leaves.len()
            )));
        }
        let b = config.branching;
        let mut levels = vec![Vec::new(); config.height];
        levels[config.height - 1] = leaves;
        for level in (1..config.height).rev() {
            let child = &levels[level]; // level+1 counts
            let parent: Vec<f64> = child.chunks(b).map(|c| c.iter().sum()).collect();
            levels[level - 1] = parent;
        }
        let integral = levels
            .iter()
            .flatten()
            .all(|&v| v.fract() == 0.0 && v.abs() < 2f64.powi(53));
        Ok(Self {
            config,
            levels,
            integral,
        })
    }

    pub fn config(&self) -> TreeConfig {
        self.config
    }

    /// Counts of 1-based level `i`.
    pub fn level(&self, level: usize) -> &[f64] {
        &self.levels[level - 1]
    }

    pub fn leaf_counts(&self) -> &[f64] {
        self.level(self.config.height)
    }

    /// True while every count is an exact integer (pre-noise, pre-consistency).
    pub fn is_integral(&self) -> bool {
        self.integral
    }

    /// Sum of the leaf level.
    pub fn total(&self) -> f64 {
        self.leaf_counts().iter().sum()
    }

    /// Sum of an arbitrary level.
    pub fn level_sum(&self, level: usize) -> f64 {
        self.level(level).iter().sum()
    }

    /// Mutable access for noise injection; marks the tree non-integral when
    /// asked to.
    pub(crate) fn add_to_bin(&mut self, level: usize, bin: usize, delta: f64) {
        self.levels[level - 1][bin] += delta;
        if delta.fract() != 0.0 {
            self.integral = false;
        }
    }

    /// Element-wise sum of the trees, in the given order.
    pub fn aggregate(trees: &[HierHistogram]) -> Result<HierHistogram> {
        let first = trees
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot aggregate zero histograms".into()))?;
        let mut acc = first.clone();
        for t in &trees[1..] {
            if t.config != acc.config {
                return Err(Error::ConfigMismatch(format!(
                    "{:?} vs {:?}",
                    t.config, acc.config
                )));
            }
            for (al, tl) in acc.levels.iter_mut().zip(&t.levels) {
                for (a, v) in al.iter_mut().zip(tl) {
                    *a += v;
                }
            }
            acc.integral &= t.integral;
        }
        Ok(acc)
    }

    /// Count of records with score below leaf edge `leaf_index`, computed by
    /// the root-to-leaf decomposition touching at most `(b-1) * h` stored
    /// bins. On a consistent tree this equals the direct sum of the first
    /// `leaf_index` leaf counts; on a noisy tree it is the lower-variance
    /// estimate that motivates transmitting every level.
    pub fn prefix_count(&self, leaf_index: usize) -> Result<f64> {
        let leaves = self.config.leaves();
        if leaf_index > leaves {
            return Err(Error::IndexOutOfBounds {
                index: leaf_index,
                max: leaves,
            });
        }
        let b = self.config.branching;
        let mut acc = 0.0;
        let mut remaining = leaf_index; // leaves still to cover
        let mut offset = 0usize; // bin offset of the current subtree at each level
        for level in 1..=self.config.height {
            let span = b.pow((self.config.height - level) as u32); // leaves per bin
            let take = remaining / span;
            let row = &self.levels[level - 1];
            for j in 0..take {
                acc += row[offset + j];
            }
            remaining -= take * span;
            if remaining == 0 {
                break;
            }
            offset = (offset + take) * b;
        }
        Ok(acc)
    }

    /// Least-squares consistency post-processing.
    ///
    /// Assumes independent noise of equal variance on every stored bin (the
    /// equal per-layer budget split makes this hold) and returns the tree
    /// whose parent counts equal the sum of their children at every internal
    /// node. Two passes: a bottom-up weighted combination of each node's own
    /// value with its children's sum, then a top-down redistribution of the
    /// parent residual equally among children. Level-1 nodes have no stored
    /// parent, so each level-1 subtree is adjusted independently.
    pub fn enforce_consistency(&self) -> HierHistogram {
        let b = self.config.branching;
        let h = self.config.height;
        if h == 1 {
            return self.clone();
        }

        // Bottom-up: z[v] = w_l * n[v] + (1 - w_l) * child_sum, where l is
        // the subtree height of v (leaves have l = 1) and
        // w_l = (b^l - b^(l-1)) / (b^l - 1).
        let mut z = self.levels.clone();
        for level in (1..h).rev() {
            let l = (h - level + 1) as i32; // subtree height at this level
            let bl = (b as f64).powi(l);
            let bl1 = (b as f64).powi(l - 1);
            let w_own = (bl - bl1) / (bl - 1.0);
            let w_child = (bl1 - 1.0) / (bl - 1.0);
            let child_sums: Vec<f64> = z[level] // level+1 counts
                .chunks(b)
                .map(|c| c.iter().sum())
                .collect();
            for (bin, sum) in child_sums.iter().enumerate() {
                z[level - 1][bin] = w_own * self.levels[level - 1][bin] + w_child * sum;
            }
        }

        // Top-down: leave level 1 at its bottom-up estimate, then spread each
        // parent's residual (relative to its children's bottom-up sum)
        // equally over the children.
        let mut out = z.clone();
        for level in 2..=h {
            let parent_row = out[level - 2].clone();
            for (parent_bin, parent_val) in parent_row.iter().enumerate() {
                let start = parent_bin * b;
                let child_sum: f64 = z[level - 1][start..start + b].iter().sum();
                let residual = (parent_val - child_sum) / b as f64;
                for (child, zc) in out[level - 1][start..start + b]
                    .iter_mut()
                    .zip(&z[level - 1][start..start + b])
                {
                    *child = zc + residual;
                }
            }
        }

        HierHistogram {
            config: self.config,
            levels: out,
            integral: false,
        }
    }
}

/// Serialized histogram header used by both the JSON and binary formats.
#[derive(Debug, Serialize, Deserialize)]
struct WireTree {
    branching: usize,
    height: usize,
    lo: f64,
    hi: f64,
    integral: bool,
    /// Level-major flattened counts: level 1 first.
    counts: Vec<f64>,
}

impl HierHistogram {
    fn to_wire(&self) -> WireTree {
        WireTree {
            branching: self.config.branching,
            height: self.config.height,
            lo: self.config.range.lo,
            hi: self.config.range.hi,
            integral: self.integral,
            counts: self.levels.iter().flatten().copied().collect(),
        }
    }

    fn from_wire(wire: WireTree) -> Result<Self> {
        let config = TreeConfig::new(
            wire.branching,
            wire.height,
            ScoreRange::new(wire.lo, wire.hi)?,
        )?;
        if wire.counts.len() != config.total_bins() {
            return Err(Error::ConfigMismatch(format!(
                "expected {} counts, got {}",
                config.total_bins(),
                wire.counts.len()
            )));
        }
        let mut levels = Vec::with_capacity(config.height);
        let mut cursor = 0usize;
        for i in 1..=config.height {
            let n = config.bins_at(i);
            levels.push(wire.counts[cursor..cursor + n].to_vec());
            cursor += n;
        }
        Ok(Self {
            config,
            levels,
            integral: wire.integral,
        })
    }

    /// Human-readable JSON form (debugging aid).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_wire()).expect("histogram serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let wire: WireTree =
            serde_json::from_str(json).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::from_wire(wire)
    }

    /// Length-prefixed little-endian binary form: header, then `u32` count of
    /// entries, then the counts (`f64` each).
    pub fn to_bytes(&self) -> Vec<u8> {
        let wire = self.to_wire();
        let mut out = Vec::with_capacity(26 + wire.counts.len() * 8);
        out.extend_from_slice(&(wire.branching as u32).to_le_bytes());
        out.extend_from_slice(&(wire.height as u32).to_le_bytes());
        out.extend_from_slice(&wire.lo.to_le_bytes());
        out.extend_from_slice(&wire.hi.to_le_bytes());
        out.push(wire.integral as u8);
        out.extend_from_slice(&(wire.counts.len() as u32).to_le_bytes());
        for c in &wire.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let too_short = || Error::InvalidInput("truncated histogram buffer".into());
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let slice = bytes.get(at..at + n).ok_or_else(too_short)?;
            at += n;
            Ok(slice)
        };
        let branching = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let lo = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let hi = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let integral = take(1)?[0] != 0;
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut counts = Vec::with_capacity(len);
        for _ in 0..len {
            counts.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        Self::from_wire(WireTree {
            branching,
            height,
            lo,
            hi,
            integral,
            counts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, partition, PartitionSpec, SyntheticSpec};
    use proptest::prelude::*;

    fn unit_config(b: usize, h: usize) -> TreeConfig {
        TreeConfig::new(b, h, ScoreRange::unit()).unwrap()
    }

    #[test]
    fn height_rule_examples() {
        assert_eq!(height_for(1024, 2, 2).unwrap(), 12);
        assert_eq!(height_for(100, 2, 2).unwrap(), 9);
        // b^h > Q always holds
        for q in [2usize, 3, 16, 100, 1000] {
            for b in [2usize, 3, 4] {
                let h = height_for(q, b, 0).unwrap();
                assert!(b.pow(h as u32) >= q, "q={q} b={b} h={h}");
                let h2 = height_for(q, b, 2).unwrap();
                assert!(b.pow(h2 as u32) > q);
            }
        }
    }

    #[test]
    fn eight_k_integers_per_histogram() {
        // Q=1024, b=2, c=2 -> h=12 -> 2^13 - 2 = 8190 stored bins.
        let h = height_for(1024, 2, 2).unwrap();
        let config = unit_config(2, h);
        assert_eq!(config.total_bins(), (1 << 13) - 2);
    }

    #[test]
    fn build_places_scores() {
        let t = HierHistogram::build(&[0.1, 0.6], unit_config(2, 1)).unwrap();
        assert_eq!(t.level(1), &[1.0, 1.0]);

        let t = HierHistogram::build(&[0.1, 0.6], unit_config(2, 2)).unwrap();
        assert_eq!(t.level(1), &[1.0, 1.0]);
        assert_eq!(t.level(2), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn top_of_range_lands_in_last_leaf() {
        let t = HierHistogram::build(&[1.0], unit_config(2, 3)).unwrap();
        assert_eq!(t.leaf_counts()[7], 1.0);
    }

    #[test]
    fn build_rejects_out_of_range() {
        assert!(HierHistogram::build(&[1.2], unit_config(2, 2)).is_err());
    }

    #[test]
    fn aggregate_sums_elementwise() {
        let a = HierHistogram::build(&[0.1], unit_config(2, 1)).unwrap();
        let b = HierHistogram::build(&[0.7, 0.8], unit_config(2, 1)).unwrap();
        let sum = HierHistogram::aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(sum.level(1), &[1.0, 2.0]);
        let single = HierHistogram::aggregate(&[a.clone()]).unwrap();
        assert_eq!(single, a);
    }

    #[test]
    fn aggregate_rejects_config_mismatch() {
        let a = HierHistogram::zeros(unit_config(2, 1));
        let b = HierHistogram::zeros(unit_config(2, 2));
        assert!(HierHistogram::aggregate(&[a, b]).is_err());
    }

    #[test]
    fn partition_invariance_is_exact() {
        let data = generate(&SyntheticSpec::balanced(400, 17)).unwrap();
        let config = unit_config(2, 6);
        let whole = HierHistogram::build(&data.all_scores(), config).unwrap();
        for spec in [
            PartitionSpec::iid(7, 3),
            PartitionSpec::label_skew(5, 1.0, 4),
        ] {
            let shards = partition(&data, &spec).unwrap();
            let trees: Vec<_> = shards
                .iter()
                .map(|s| HierHistogram::build(&s.all_scores(), config).unwrap())
                .collect();
            let agg = HierHistogram::aggregate(&trees).unwrap();
            assert_eq!(agg, whole);
        }
    }

    #[test]
    fn from_leaves_rebuilds_internal_levels() {
        let data = generate(&SyntheticSpec::balanced(200, 9)).unwrap();
        let config = unit_config(2, 5);
        let full = HierHistogram::build(&data.all_scores(), config).unwrap();
        let rebuilt = HierHistogram::from_leaves(full.leaf_counts().to_vec(), config).unwrap();
        assert_eq!(rebuilt, full);
    }

    #[test]
    fn prefix_count_trivial_bounds() {
        let t = HierHistogram::build(&[0.1, 0.2, 0.9], unit_config(2, 3)).unwrap();
        assert_eq!(t.prefix_count(0).unwrap(), 0.0);
        assert_eq!(t.prefix_count(8).unwrap(), 3.0);
        assert!(t.prefix_count(9).is_err());
    }

    #[test]
    fn prefix_count_matches_direct_leaf_sum() {
        let data = generate(&SyntheticSpec::balanced(300, 23)).unwrap();
        for (b, h) in [(2usize, 5usize), (3, 3), (4, 2)] {
            let t = HierHistogram::build(
                &data.all_scores(),
                TreeConfig::new(b, h, ScoreRange::unit()).unwrap(),
            )
            .unwrap();
            let leaves = t.leaf_counts();
            let mut direct = 0.0;
            for idx in 0..=t.config().leaves() {
                assert_eq!(t.prefix_count(idx).unwrap(), direct, "b={b} h={h} idx={idx}");
                if idx < leaves.len() {
                    direct += leaves[idx];
                }
            }
        }
    }

    #[test]
    fn consistency_fixed_point_on_exact_tree() {
        let data = generate(&SyntheticSpec::balanced(100, 31)).unwrap();
        let t = HierHistogram::build(&data.all_scores(), unit_config(2, 4)).unwrap();
        let c = t.enforce_consistency();
        for level in 1..=4 {
            for (a, b) in c.level(level).iter().zip(t.level(level)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn consistency_height_one_unchanged() {
        let mut t = HierHistogram::zeros(unit_config(2, 1));
        t.add_to_bin(1, 0, 3.0);
        t.add_to_bin(1, 1, 5.0);
        let c = t.enforce_consistency();
        assert_eq!(c.level(1), &[3.0, 5.0]);
    }

    /// Independent oracle: solve the constrained least-squares system
    /// directly. Unknowns are the leaf values; every stored level is
    /// predicted by subtree sums and fitted to the observations via normal
    /// equations solved by Gaussian elimination.
    fn least_squares_oracle(tree: &HierHistogram) -> Vec<Vec<f64>> {
        let config = tree.config();
        let (b, h) = (config.branching, config.height);
        let leaves = config.leaves();
        // rows: one observation per stored bin
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for level in 1..=h {
            let span = b.pow((h - level) as u32);
            for (bin, &obs) in tree.level(level).iter().enumerate() {
                let mut coef = vec![0.0; leaves];
                for leaf in bin * span..(bin + 1) * span {
                    coef[leaf] = 1.0;
                }
                rows.push((coef, obs));
            }
        }
        // normal equations
        let mut a = vec![vec![0.0; leaves + 1]; leaves];
        for (coef, obs) in &rows {
            for i in 0..leaves {
                if coef[i] == 0.0 {
                    continue;
                }
                for j in 0..leaves {
                    a[i][j] += coef[i] * coef[j];
                }
                a[i][leaves] += coef[i] * obs;
            }
        }
        // Gaussian elimination with partial pivoting
        for col in 0..leaves {
            let pivot = (col..leaves)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            let p = a[col][col];
            for j in col..=leaves {
                a[col][j] /= p;
            }
            for i in 0..leaves {
                if i != col && a[i][col] != 0.0 {
                    let f = a[i][col];
                    for j in col..=leaves {
                        a[i][j] -= f * a[col][j];
                    }
                }
            }
        }
        let leaf_fit: Vec<f64> = (0..leaves).map(|i| a[i][leaves]).collect();
        // expand to all levels
        let mut levels = Vec::new();
        for level in 1..=h {
            let span = b.pow((h - level) as u32);
            levels.push(
                leaf_fit
                    .chunks(span)
                    .map(|c| c.iter().sum::<f64>())
                    .collect::<Vec<f64>>(),
            );
        }
        levels
    }

    #[test]
    fn consistency_matches_least_squares_oracle() {
        // Hand case from direct solving: level-1 [10, 0], level-2 [3,3,1,1]
        // gives level-1 [26/3, 2/3] and level-2 [13/3, 13/3, 1/3, 1/3].
        let mut t = HierHistogram::zeros(unit_config(2, 2));
        for (i, v) in [10.0, 0.0].iter().enumerate() {
            t.add_to_bin(1, i, *v);
        }
        for (i, v) in [3.0, 3.0, 1.0, 1.0].iter().enumerate() {
            t.add_to_bin(2, i, *v);
        }
        let c = t.enforce_consistency();
        let expect1 = [26.0 / 3.0, 2.0 / 3.0];
        let expect2 = [13.0 / 3.0, 13.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        for (a, e) in c.level(1).iter().zip(expect1) {
            assert!((a - e).abs() < 1e-9, "{a} vs {e}");
        }
        for (a, e) in c.level(2).iter().zip(expect2) {
            assert!((a - e).abs() < 1e-9, "{a} vs {e}");
        }

        let oracle = least_squares_oracle(&t);
        for level in 1..=2 {
            for (a, e) in c.level(level).iter().zip(&oracle[level - 1]) {
                assert!((a - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn consistency_oracle_on_random_noisy_trees() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        for (b, h) in [(2usize, 3usize), (3, 2), (2, 4)] {
            let config = TreeConfig::new(b, h, ScoreRange::unit()).unwrap();
            let mut t = HierHistogram::zeros(config);
            for level in 1..=h {
                for bin in 0..config.bins_at(level) {
                    t.add_to_bin(level, bin, rng.gen_range(-4.0..20.0_f64).round());
                }
            }
            let c = t.enforce_consistency();
            // parent equals child sum
            for level in 1..h {
                for (bin, parent) in c.level(level).iter().enumerate() {
                    let child: f64 = c.level(level + 1)[bin * b..(bin + 1) * b].iter().sum();
                    assert!((parent - child).abs() < 1e-9, "b={b} h={h}");
                }
            }
            // matches the dense solve
            let oracle = least_squares_oracle(&t);
            for level in 1..=h {
                for (a, e) in c.level(level).iter().zip(&oracle[level - 1]) {
                    assert!((a - e).abs() < 1e-6, "b={b} h={h} level={level}: {a} vs {e}");
                }
            }
        }
    }

    #[test]
    fn consistency_level_sums_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let config = unit_config(2, 5);
        let mut t = HierHistogram::zeros(config);
        for level in 1..=5 {
            for bin in 0..config.bins_at(level) {
                t.add_to_bin(level, bin, rng.gen_range(-3.0..30.0_f64).round());
            }
        }
        let c = t.enforce_consistency();
        let base = c.level_sum(1);
        for level in 2..=5 {
            let s = c.level_sum(level);
            assert!(
                (s - base).abs() <= 1e-6 * base.abs().max(1.0),
                "level {level}: {s} vs {base}"
            );
        }
    }

    proptest! {
        #[test]
        fn consistency_is_idempotent(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let config = unit_config(2, 3);
            let mut t = HierHistogram::zeros(config);
            for level in 1..=3 {
                for bin in 0..config.bins_at(level) {
                    t.add_to_bin(level, bin, rng.gen_range(-5.0..25.0));
                }
            }
            let once = t.enforce_consistency();
            let twice = once.enforce_consistency();
            for level in 1..=3 {
                for (a, b) in once.level(level).iter().zip(twice.level(level)) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn prefix_count_monotone_on_consistent_nonneg_trees(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let config = unit_config(2, 4);
            let leaves: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..10.0_f64).round()).collect();
            let t = HierHistogram::from_leaves(leaves, config).unwrap();
            let mut prev = -1.0;
            for idx in 0..=16 {
                let p = t.prefix_count(idx).unwrap();
                prop_assert!(p >= prev);
                prev = p;
            }
        }
    }

    #[test]
    fn wire_round_trips() {
        let data = generate(&SyntheticSpec::balanced(50, 3)).unwrap();
        let t = HierHistogram::build(&data.all_scores(), unit_config(2, 3)).unwrap();
        assert_eq!(HierHistogram::from_json(&t.to_json()).unwrap(), t);
        assert_eq!(HierHistogram::from_bytes(&t.to_bytes()).unwrap(), t);
        assert!(HierHistogram::from_bytes(&t.to_bytes()[..10]).is_err());
    }
}
