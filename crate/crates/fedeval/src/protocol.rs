//! End-to-end federated curve reconstruction: client histogram construction
//! (with optional noise shares), server aggregation, consistency
//! post-processing, quantile extraction, curve assembly, and communication
//! accounting, plus metrics against the exact centralized oracle.

use serde::{Deserialize, Serialize};

use crate::curve::{
    self, build_ecdf, CurveEstimate, CurveMeta, PrStrategy,
};
use crate::data::{partition, LabeledScores, Label, PartitionSpec, ScoreRange};
use crate::error::{Error, Result};
use crate::histogram::{height_for, HierHistogram, TreeConfig};
use crate::interpolate::InterpMethod;
use crate::metrics::{area_error, auc_roc, average_precision, CurveFunction};
use crate::noise::{add_noise, PrivacyParams};
use crate::quantile::{estimate_quantiles, estimate_total, exact_quantiles, QuantileProfile};

/// Default uniform threshold grid density for curve evaluation.
pub const DEFAULT_GRID_POINTS: usize = 2048;
/// Default uniform grid size for Area Error integration.
pub const DEFAULT_AE_GRID: usize = 10_000;
/// Modeled wire size of one transmitted bin count (32-bit integer).
pub const BYTES_PER_COUNT: u64 = 4;

/// Release mechanism selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Mode {
    /// Idealized baseline: exact quantiles from sorted raw scores.
    Eq,
    /// Secure aggregation of exact histograms (no noise); clients transmit
    /// only the `b^h` leaf counts.
    Sa,
    /// Distributed differential privacy: every client perturbs every stored
    /// bin of every level with a Polya noise share.
    Ddp { epsilon: f64 },
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Eq => "eq",
            Mode::Sa => "sa",
            Mode::Ddp { .. } => "ddp",
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Mode::Ddp { epsilon } => Some(*epsilon),
            _ => None,
        }
    }
}

/// Full protocol configuration for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Number of evenly spaced quantiles per histogram.
    pub quantiles: usize,
    /// Histogram branching factor `b`.
    pub branching: usize,
    /// Height slack `c` in `h = ceil(log_b Q) + c`.
    pub slack: usize,
    pub mode: Mode,
    pub pr_strategy: PrStrategy,
    pub interp: InterpMethod,
    /// Uniform threshold grid density added to the quantile-value grid.
    pub grid_points: usize,
    /// Master seed for the noise substreams.
    pub seed: u64,
    /// Under the combine strategy, account for each record appearing in two
    /// histograms by halving the per-histogram budget.
    pub strict_combine_budget: bool,
}

impl ProtocolConfig {
    pub fn new(quantiles: usize, mode: Mode) -> Self {
        Self {
            quantiles,
            branching: 2,
            slack: 2,
            mode,
            pr_strategy: PrStrategy::Separate,
            interp: InterpMethod::Pchip,
            grid_points: DEFAULT_GRID_POINTS,
            seed: 0,
            strict_combine_budget: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_strategy(mut self, strategy: PrStrategy) -> Self {
        self.pr_strategy = strategy;
        self
    }

    pub fn with_interp(mut self, interp: InterpMethod) -> Self {
        self.interp = interp;
        self
    }

    /// Derived tree height `ceil(log_b Q) + c`.
    pub fn height(&self) -> Result<usize> {
        height_for(self.quantiles, self.branching, self.slack)
    }

    pub fn tree_config(&self, range: ScoreRange) -> Result<TreeConfig> {
        TreeConfig::new(self.branching, self.height()?, range)
    }

    /// Histograms each client materializes: the two class histograms, plus
    /// the all-scores histogram under the combine strategy.
    pub fn histograms_per_client(&self) -> u64 {
        match self.pr_strategy {
            PrStrategy::Separate => 2,
            PrStrategy::Combine => 3,
        }
    }

    /// Per-histogram privacy budget under DDP, honoring the strict combine
    /// accounting flag (a record appears in its class histogram and, under
    /// combine, the all-scores histogram as well).
    pub fn per_histogram_epsilon(&self) -> Option<f64> {
        let eps = self.mode.epsilon()?;
        if self.strict_combine_budget && self.pr_strategy == PrStrategy::Combine {
            Some(eps / 2.0)
        } else {
            Some(eps)
        }
    }

    /// Modeled upload size per client in bytes: leaf counts only under SA,
    /// every stored bin under DDP, `Q` quantile values per class for the
    /// idealized EQ baseline.
    pub fn comm_bytes_per_client(&self, range: ScoreRange) -> Result<u64> {
        let per_histogram = match self.mode {
            Mode::Eq => self.quantiles as u64,
            Mode::Sa => self.tree_config(range)?.leaves() as u64,
            Mode::Ddp { .. } => self.tree_config(range)?.total_bins() as u64,
        };
        let histograms = match self.mode {
            Mode::Eq => 2,
            _ => self.histograms_per_client(),
        };
        Ok(histograms * per_histogram * BYTES_PER_COUNT)
    }

    fn validate(&self) -> Result<()> {
        if self.quantiles < 2 {
            return Err(Error::Config("quantile count must be >= 2".into()));
        }
        if let Mode::Ddp { epsilon } = self.mode {
            if !(epsilon > 0.0) {
                return Err(Error::Config(format!(
                    "DDP requires a positive privacy budget, got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

/// Histogram tags fixed across the protocol so noise substreams never
/// collide between the class and all-scores trees.
const TAG_POS: u64 = 0;
const TAG_NEG: u64 = 1;
const TAG_ALL: u64 = 2;

/// What one client uploads: a histogram per class and, under the combine
/// strategy, one over all scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientMessage {
    pub pos: HierHistogram,
    pub neg: HierHistogram,
    pub all: Option<HierHistogram>,
}

/// Build (and under DDP, perturb) the histograms for one client shard.
///
/// `client_index` selects the noise substream; `total_clients` sets the
/// Polya share so the aggregate noise is geometric.
pub fn client_step(
    shard: &LabeledScores,
    config: &ProtocolConfig,
    client_index: u64,
    total_clients: usize,
) -> Result<ClientMessage> {
    config.validate()?;
    let tree_config = config.tree_config(shard.range())?;
    let pos = HierHistogram::build(&shard.class_scores(Label::Positive), tree_config)?;
    let neg = HierHistogram::build(&shard.class_scores(Label::Negative), tree_config)?;
    let all = match config.pr_strategy {
        PrStrategy::Combine => Some(HierHistogram::build(&shard.all_scores(), tree_config)?),
        PrStrategy::Separate => None,
    };

    if let Mode::Ddp { .. } = config.mode {
        let eps = config.per_histogram_epsilon().expect("DDP has a budget");
        let params = PrivacyParams::new(eps, total_clients, tree_config.height)?;
        let noisy = |tree: &HierHistogram, tag: u64| {
            add_noise(tree, &params, config.seed, client_index, tag)
        };
        return Ok(ClientMessage {
            pos: noisy(&pos, TAG_POS),
            neg: noisy(&neg, TAG_NEG),
            all: all.as_ref().map(|t| noisy(t, TAG_ALL)),
        });
    }
    Ok(ClientMessage { pos, neg, all })
}

/// Server-side intermediates: aggregated (and post-processed) histograms
/// reduced to quantile profiles.
#[derive(Debug, Clone)]
pub struct ServerProfiles {
    pub pos: QuantileProfile,
    pub neg: QuantileProfile,
    pub all: Option<QuantileProfile>,
}

/// Aggregate client messages in order, post-process under DDP, and extract
/// quantile profiles.
pub fn server_step(messages: &[ClientMessage], config: &ProtocolConfig) -> Result<ServerProfiles> {
    if messages.is_empty() {
        return Err(Error::InvalidInput("no client messages to aggregate".into()));
    }
    let reduce = |pick: fn(&ClientMessage) -> Option<&HierHistogram>| -> Result<Option<HierHistogram>> {
        let trees: Vec<HierHistogram> = messages.iter().filter_map(pick).cloned().collect();
        if trees.is_empty() {
            return Ok(None);
        }
        if trees.len() != messages.len() {
            return Err(Error::ConfigMismatch(
                "clients disagree on the histogram set".into(),
            ));
        }
        let mut agg = HierHistogram::aggregate(&trees)?;
        if matches!(config.mode, Mode::Ddp { .. }) {
            agg = agg.enforce_consistency();
        }
        Ok(Some(agg))
    };

    let pos = reduce(|m| Some(&m.pos))?.expect("positive histogram always present");
    let neg = reduce(|m| Some(&m.neg))?.expect("negative histogram always present");
    let all = reduce(|m| m.all.as_ref())?;

    let profile = |tree: &HierHistogram| estimate_quantiles(tree, config.quantiles);
    Ok(ServerProfiles {
        pos: profile(&pos)?,
        neg: profile(&neg)?,
        all: all.as_ref().map(profile).transpose()?,
    })
}

/// Assemble estimated ROC and PR curves from quantile profiles.
fn assemble_curves(
    profiles: &ServerProfiles,
    config: &ProtocolConfig,
    range: ScoreRange,
) -> Result<(CurveEstimate, CurveEstimate)> {
    let ecdf_pos = build_ecdf(&profiles.pos, config.interp)?;
    let ecdf_neg = build_ecdf(&profiles.neg, config.interp)?;
    let (n_pos, n_neg) = (profiles.pos.total, profiles.neg.total);

    let mut grid_profiles: Vec<&QuantileProfile> = vec![&profiles.pos, &profiles.neg];
    if let Some(all) = &profiles.all {
        grid_profiles.push(all);
    }
    let grid = curve::threshold_grid(range, &grid_profiles, config.grid_points);

    let meta = CurveMeta {
        mode: config.mode.label().into(),
        q: Some(config.quantiles),
        epsilon: config.mode.epsilon(),
        strategy: None,
        interp: Some(config.interp),
        n_pos,
        n_neg,
        clip_events: 0,
    };

    let roc = curve::roc_estimate(&ecdf_neg, &ecdf_pos, &grid, meta.clone());
    let pr = match config.pr_strategy {
        PrStrategy::Separate => {
            curve::pr_estimate_separate(&ecdf_neg, &ecdf_pos, n_pos, n_neg, &grid, meta)
        }
        PrStrategy::Combine => {
            let all = profiles.all.as_ref().ok_or_else(|| {
                Error::Config("combine strategy requires the all-scores histogram".into())
            })?;
            let ecdf_all = build_ecdf(all, config.interp)?;
            curve::pr_estimate_combine(&ecdf_all, &ecdf_pos, all.total, n_pos, &grid, meta)
        }
    };
    Ok((roc, pr))
}

/// Outcome of one full protocol run, with metrics against the exact oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub roc: CurveEstimate,
    pub pr: CurveEstimate,
    pub ae_roc: f64,
    pub ae_pr: f64,
    /// AUC of the estimated (and exact) ROC curve.
    pub auc: f64,
    pub auc_exact: f64,
    /// Average precision of the estimated (and exact) PR curve.
    pub ap: f64,
    pub ap_exact: f64,
    pub comm_bytes_per_client: u64,
    pub n_pos_est: f64,
    pub n_neg_est: f64,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serialization cannot fail")
    }
}

/// Execute the full pipeline: partition, client steps, server step, curve
/// assembly, and Area Error against the exact curves of the same data.
pub fn run(
    data: &LabeledScores,
    partition_spec: &PartitionSpec,
    config: &ProtocolConfig,
) -> Result<RunResult> {
    config.validate()?;
    if !data.has_both_classes() {
        return Err(Error::SingleClass);
    }

    let exact_roc = curve::exact_roc(data)?;
    let exact_pr = curve::exact_pr(data)?;

    let profiles = match config.mode {
        Mode::Eq => {
            // idealized baseline: exact quantiles of the raw class scores
            let q = config.quantiles;
            let pos = exact_quantiles(&data.class_scores(Label::Positive), q)?;
            let neg = exact_quantiles(&data.class_scores(Label::Negative), q)?;
            let all = match config.pr_strategy {
                PrStrategy::Combine => Some(exact_quantiles(&data.all_scores(), q)?),
                PrStrategy::Separate => None,
            };
            ServerProfiles { pos, neg, all }
        }
        Mode::Sa | Mode::Ddp { .. } => {
            let shards = partition(data, partition_spec)?;
            let messages: Vec<ClientMessage> = shards
                .iter()
                .enumerate()
                .map(|(i, shard)| client_step(shard, config, i as u64, shards.len()))
                .collect::<Result<_>>()?;
            server_step(&messages, config)?
        }
    };

    let (roc, pr) = assemble_curves(&profiles, config, data.range())?;

    let exact_roc_fn = CurveFunction::from_estimate(&exact_roc)?;
    let exact_pr_fn = CurveFunction::from_estimate(&exact_pr)?;
    let roc_fn = CurveFunction::from_estimate(&roc)?;
    let pr_fn = CurveFunction::from_estimate(&pr)?;

    Ok(RunResult {
        ae_roc: area_error(&exact_roc_fn, &roc_fn, DEFAULT_AE_GRID),
        ae_pr: area_error(&exact_pr_fn, &pr_fn, DEFAULT_AE_GRID),
        auc: auc_roc(&roc_fn),
        auc_exact: auc_roc(&exact_roc_fn),
        ap: average_precision(&pr_fn),
        ap_exact: average_precision(&exact_pr_fn),
        comm_bytes_per_client: config.comm_bytes_per_client(data.range())?,
        n_pos_est: profiles.pos.total,
        n_neg_est: profiles.neg.total,
        roc,
        pr,
    })
}
