//! Score datasets: CSV ingestion, synthetic generation, client partitioning,
//! and positive-class subsampling.
//!
//! A dataset is a flat list of `(score, label)` records together with the
//! declared closed score range. Scores outside the range are a hard error
//! everywhere; silent clamping would corrupt the ECDF tails without any
//! visible symptom downstream.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed score interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: f64,
    pub hi: f64,
}

impl ScoreRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidInput(format!(
                "score range [{lo}, {hi}] must be a finite non-empty interval"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Default unit range for probability-like scores.
    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, score: f64) -> bool {
        score >= self.lo && score <= self.hi
    }
}

impl fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }
}

/// One scored example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub score: f64,
    pub label: Label,
}

/// An ordered collection of scored examples with tallied class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    records: Vec<ScoreRecord>,
    range: ScoreRange,
    n_pos: usize,
    n_neg: usize,
}

impl LabeledScores {
    /// Build from records, validating every score against `range`.
    pub fn new(records: Vec<ScoreRecord>, range: ScoreRange) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if !r.score.is_finite() || !range.contains(r.score) {
                return Err(Error::ScoreOutOfRange {
                    score: r.score,
                    lo: range.lo,
                    hi: range.hi,
                    row: i + 1,
                });
            }
        }
        let n_pos = records.iter().filter(|r| r.label.is_positive()).count();
        let n_neg = records.len() - n_pos;
        Ok(Self {
            records,
            range,
            n_pos,
            n_neg,
        })
    }

    pub fn empty(range: ScoreRange) -> Self {
        Self {
            records: Vec::new(),
            range,
            n_pos: 0,
            n_neg: 0,
        }
    }

    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn range(&self) -> ScoreRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    /// Positive-to-negative ratio `n+ / n-`.
    pub fn class_ratio(&self) -> f64 {
        self.n_pos as f64 / self.n_neg as f64
    }

    /// Scores of one class, in record order.
    pub fn class_scores(&self, label: Label) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.score)
            .collect()
    }

    /// All scores regardless of class, in record order.
    pub fn all_scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    /// True when curves can be constructed (both classes present).
    pub fn has_both_classes(&self) -> bool {
        self.n_pos >= 1 && self.n_neg >= 1
    }
}

/// Load a dataset from a `score,label` CSV file.
///
/// The header is required and labels must be encoded `0`/`1`. Any score
/// outside `range` aborts the load.
pub fn load_csv<P: AsRef<Path>>(path: P, range: ScoreRange) -> Result<LabeledScores> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;

    {
        let headers = reader.headers().map_err(|e| Error::MalformedRow {
            row: 0,
            reason: e.to_string(),
        })?;
        if headers.len() != 2 || &headers[0] != "score" || &headers[1] != "label" {
            return Err(Error::MalformedRow {
                row: 0,
                reason: format!("expected header `score,label`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::MalformedRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        if row.len() != 2 {
            return Err(Error::MalformedRow {
                row: row_no,
                reason: format!("expected 2 fields, got {}", row.len()),
            });
        }
        let score: f64 = row[0].trim().parse().map_err(|_| Error::MalformedRow {
            row: row_no,
            reason: format!("unparsable score `{}`", &row[0]),
        })?;
        let label = match row[1].trim() {
            "0" => Label::Negative,
            "1" => Label::Positive,
            other => {
                return Err(Error::MalformedRow {
                    row: row_no,
                    reason: format!("label must be 0 or 1, got `{other}`"),
                })
            }
        };
        if !score.is_finite() || !range.contains(score) {
            return Err(Error::ScoreOutOfRange {
                score,
                lo: range.lo,
                hi: range.hi,
                row: row_no,
            });
        }
        records.push(ScoreRecord { score, label });
    }

    LabeledScores::new(records, range)
}

/// Write a dataset in the `score,label` CSV format accepted by [`load_csv`].
pub fn save_csv<P: AsRef<Path>>(data: &LabeledScores, path: P) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer
        .write_record(["score", "label"])
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    for r in data.records() {
        let label = if r.label.is_positive() { "1" } else { "0" };
        writer
            .write_record([format!("{}", r.score).as_str(), label])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Beta distribution shape pair used for class-conditional synthetic scores.
///
/// Beta densities are bounded on (0,1) for shapes >= 1, which keeps the
/// generated ECDFs Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha <= 0.0 || beta <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "Beta shape parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Analytic mean `alpha / (alpha + beta)` on the unit interval.
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Specification for a synthetic two-class score sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub pos_dist: BetaShape,
    pub neg_dist: BetaShape,
    pub n_pos: usize,
    pub n_neg: usize,
    pub range: ScoreRange,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Well-separated default: positives skewed high, negatives skewed low.
    pub fn balanced(n_per_class: usize, seed: u64) -> Self {
        Self {
            pos_dist: BetaShape {
                alpha: 5.0,
                beta: 2.0,
            },
            neg_dist: BetaShape {
                alpha: 2.0,
                beta: 5.0,
            },
            n_pos: n_per_class,
            n_neg: n_per_class,
            range: ScoreRange::unit(),
            seed,
        }
    }
}

/// Draw a synthetic dataset. Deterministic for a given spec.
///
/// Positives are emitted first, then negatives; both classes are drawn from
/// their Beta distributions and affinely mapped onto the score range.
pub fn generate(spec: &SyntheticSpec) -> Result<LabeledScores> {
    let pos = Beta::new(spec.pos_dist.alpha, spec.pos_dist.beta)
        .map_err(|e| Error::InvalidInput(format!("positive-class distribution: {e}")))?;
    let neg = Beta::new(spec.neg_dist.alpha, spec.neg_dist.beta)
        .map_err(|e| Error::InvalidInput(format!("negative-class distribution: {e}")))?;

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.n_pos + spec.n_neg);
    let (lo, w) = (spec.range.lo, spec.range.width());
    for _ in 0..spec.n_pos {
        let s: f64 = pos.sample(&mut rng);
        records.push(ScoreRecord {
            score: lo + s * w,
            label: Label::Positive,
        });
    }
    for _ in 0..spec.n_neg {
        let s: f64 = neg.sample(&mut rng);
        records.push(ScoreRecord {
            score: lo + s * w,
            label: Label::Negative,
        });
    }
    LabeledScores::new(records, spec.range)
}

/// How records are distributed across simulated clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionStrategy {
    /// Uniform random assignment; shard sizes differ by at most one.
    Iid,
    /// Sort by label, cut into contiguous chunks, then blend each record
    /// back toward an iid assignment with probability `1 - skew`.
    LabelSkew { skew: f64 },
    /// Caller-provided record indices per client; must cover every record
    /// exactly once.
    Explicit { assignment: Vec<Vec<usize>> },
}

/// Partition specification: strategy, client count, and RNG seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub strategy: PartitionStrategy,
    pub clients: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn iid(clients: usize, seed: u64) -> Self {
        Self {
            strategy: PartitionStrategy::Iid,
            clients,
            seed,
        }
    }

    pub fn label_skew(clients: usize, skew: f64, seed: u64) -> Self {
        Self {
            strategy: PartitionStrategy::LabelSkew { skew },
            clients,
            seed,
        }
    }

    /// Single shard holding the whole dataset.
    pub fn centralized() -> Self {
        Self::iid(1, 0)
    }
}

/// Split a dataset into one shard per client.
///
/// The shards form a disjoint cover of the input records and every shard
/// carries the global score range.
pub fn partition(data: &LabeledScores, spec: &PartitionSpec) -> Result<Vec<LabeledScores>> {
    if spec.clients == 0 {
        return Err(Error::InvalidInput("client count must be >= 1".into()));
    }
    let n = data.len();
    let m = spec.clients;

    // client index per record
    let owner: Vec<usize> = match &spec.strategy {
        PartitionStrategy::Iid => iid_owners(n, m, spec.seed),
        PartitionStrategy::LabelSkew { skew } => {
            if !(0.0..=1.0).contains(skew) {
                return Err(Error::InvalidInput(format!(
                    "skew must lie in [0, 1], got {skew}"
                )));
            }
            let sorted = sorted_chunk_owners(data, m);
            let iid = iid_owners(n, m, spec.seed);
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed ^ 0x5eed_b1e5_d0c5_ca1e);
            (0..n)
                .map(|i| {
                    if rng.gen::<f64>() < *skew {
                        sorted[i]
                    } else {
                        iid[i]
                    }
                })
                .collect()
        }
        PartitionStrategy::Explicit { assignment } => {
            if assignment.len() != m {
                return Err(Error::InvalidInput(format!(
                    "explicit assignment has {} clients, spec says {m}",
                    assignment.len()
                )));
            }
            let mut owner = vec![usize::MAX; n];
            for (client, indices) in assignment.iter().enumerate() {
                for &idx in indices {
                    if idx >= n {
                        return Err(Error::InvalidInput(format!(
                            "explicit assignment references record {idx}, dataset has {n}"
                        )));
                    }
                    if owner[idx] != usize::MAX {
                        return Err(Error::InvalidInput(format!(
                            "record {idx} assigned to more than one client"
                        )));
                    }
                    owner[idx] = client;
                }
            }
            if let Some(missing) = owner.iter().position(|&c| c == usize::MAX) {
                return Err(Error::InvalidInput(format!(
                    "record {missing} not assigned to any client"
                )));
            }
            owner
        }
    };

    let mut shards: Vec<Vec<ScoreRecord>> = vec![Vec::new(); m];
    for (i, r) in data.records().iter().enumerate() {
        shards[owner[i]].push(*r);
    }
    shards
        .into_iter()
        .map(|records| LabeledScores::new(records, data.range()))
        .collect()
}

fn iid_owners(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut owner = vec![0usize; n];
    for (pos, &record) in order.iter().enumerate() {
        owner[record] = pos % m;
    }
    owner
}

/// Stable sort negatives-first, then cut into `m` near-equal contiguous chunks.
fn sorted_chunk_owners(data: &LabeledScores, m: usize) -> Vec<usize> {
    let n = data.len();
    let mut by_label: Vec<usize> = (0..n).collect();
    by_label.sort_by_key(|&i| data.records()[i].label.is_positive());
    let mut owner = vec![0usize; n];
    for (pos, &record) in by_label.iter().enumerate() {
        // chunk boundaries at ceil(n*k/m)
        owner[record] = (pos * m) / n.max(1);
    }
    owner
}

/// Subsample positives (without replacement) down to a target pos-to-neg
/// ratio `r`, leaving every negative record intact.
///
/// The retained positive count is `floor(r * n_neg)`.
pub fn subsample_ratio(data: &LabeledScores, r: f64, seed: u64) -> Result<LabeledScores> {
    if data.n_neg() == 0 {
        return Err(Error::InvalidInput(
            "ratio subsampling requires at least one negative".into(),
        ));
    }
    let current = data.class_ratio();
    if !(r > 0.0) || r > current + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "target ratio {r} must lie in (0, {current:.6}]"
        )));
    }

    let keep = ((r * data.n_neg() as f64).floor() as usize).min(data.n_pos());
    let pos_indices: Vec<usize> = data
        .records()
        .iter()
        .enumerate()
        .filter(|(_, rec)| rec.label.is_positive())
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sampled: Vec<usize> = pos_indices
        .choose_multiple(&mut rng, keep)
        .copied()
        .collect();
    sampled.sort_unstable();

    let mut kept = vec![false; data.len()];
    for &i in &sampled {
        kept[i] = true;
    }
    let records: Vec<ScoreRecord> = data
        .records()
        .iter()
        .enumerate()
        .filter(|(i, rec)| !rec.label.is_positive() || kept[*i])
        .map(|(_, rec)| *rec)
        .collect();
    LabeledScores::new(records, data.range())
}
