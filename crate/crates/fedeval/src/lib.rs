//! Federated reconstruction of ROC and PR curves from client-held prediction
//! scores.
//!
//! Clients bin their local scores into b-ary hierarchical histograms; the
//! server aggregates the histograms, optionally under distributed
//! differential privacy with per-client Polya noise shares, estimates class
//! score quantiles, rebuilds the class ECDFs by monotone interpolation, and
//! traces the ROC and PR curves from them. Reconstruction quality is measured
//! as the Area Error against the exact curves computed centrally from the
//! same data.
//!
//! The `examples/` directory holds one runnable program per capability:
//!
//! ```text
//! cargo run --release --example exact_curves          # centralized oracle curves
//! cargo run --release --example federated_run         # one SA / DDP / EQ round trip
//! cargo run --release --example quantile_accuracy     # area error vs Q (SA)
//! cargo run --release --example privacy_tradeoff      # area error vs epsilon (DDP)
//! cargo run --release --example pr_strategies         # separate vs combine PR denominators
//! cargo run --release --example class_imbalance       # PR error vs pos-to-neg ratio
//! cargo run --release --example heterogeneity         # partition invariance check
//! cargo run --release --example interpolation_compare # linear vs pchip ECDFs
//! cargo run --release --example communication_cost    # bytes per client vs Q
//! ```
//!
//! The same operations are scriptable through the `fedeval` binary
//! (`gen`, `run`, `sweep`, `exact` subcommands) driven by a TOML config.

pub mod curve;
pub mod data;
mod error;
pub mod experiment;
pub mod histogram;
pub mod interpolate;
pub mod metrics;
pub mod noise;
pub mod protocol;
pub mod quantile;

pub use curve::{CurveEstimate, CurveKind, CurveMeta, Ecdf, PrStrategy};
pub use data::{
    BetaShape, Label, LabeledScores, PartitionSpec, PartitionStrategy, ScoreRange, ScoreRecord,
    SyntheticSpec,
};
pub use error::{Error, Result};
pub use experiment::{DatasetSource, ExperimentConfig, Sweep, SweepAxis};
pub use histogram::{height_for, HierHistogram, TreeConfig};
pub use interpolate::{InterpMethod, MonotoneInterpolant};
pub use metrics::{CurveFunction, CurveSemantics};
pub use noise::PrivacyParams;
pub use protocol::{run, Mode, ProtocolConfig, RunResult};
pub use quantile::QuantileProfile;
