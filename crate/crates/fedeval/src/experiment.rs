//! Experiment driver: declarative configs, single runs, and parameter sweeps
//! with seeded repetitions, writing metrics tables and curve files.
//!
//! Output layout per experiment:
//!
//! ```text
//! <output dir>/
//!   config.lock     resolved configuration echoed back
//!   metrics.csv     one row per (run, curve kind)
//!   medians.csv     per-cell medians across repetitions
//!   curves/<cell>/  roc.csv and pr.csv for the first repetition of each cell
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{self, CurveKind, PrStrategy};
use crate::data::{
    generate, load_csv, subsample_ratio, LabeledScores, PartitionSpec, PartitionStrategy,
    ScoreRange, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::interpolate::InterpMethod;
use crate::metrics::{auc_roc, average_precision, CurveFunction};
use crate::noise::derive_seed;
use crate::protocol::{run, Mode, ProtocolConfig, RunResult};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "FEDEVAL_OUT";

/// Where the evaluated scores come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Csv { path: PathBuf, range: ScoreRange },
    Synthetic(SyntheticSpec),
}

impl DatasetSource {
    /// Materialize the dataset; synthetic sources are re-seeded per
    /// repetition so repeated cells see fresh samples from the same
    /// distributions.
    pub fn load(&self, rep_seed: u64) -> Result<LabeledScores> {
        match self {
            DatasetSource::Csv { path, range } => load_csv(path, *range),
            DatasetSource::Synthetic(spec) => {
                let mut spec = *spec;
                spec.seed = derive_seed(spec.seed, SEED_DATA, rep_seed, 0);
                generate(&spec)
            }
        }
    }

    pub fn range(&self) -> ScoreRange {
        match self {
            DatasetSource::Csv { range, .. } => *range,
            DatasetSource::Synthetic(spec) => spec.range,
        }
    }
}

/// Swept parameter and its cell values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Quantiles(Vec<usize>),
    Epsilon(Vec<f64>),
    Ratio(Vec<f64>),
    Interp(Vec<InterpMethod>),
    Strategy(Vec<PrStrategy>),
}

impl SweepAxis {
    pub fn cells(&self) -> usize {
        match self {
            SweepAxis::Quantiles(v) => v.len(),
            SweepAxis::Epsilon(v) => v.len(),
            SweepAxis::Ratio(v) => v.len(),
            SweepAxis::Interp(v) => v.len(),
            SweepAxis::Strategy(v) => v.len(),
        }
    }

    /// Short cell identifier used in file paths and metrics rows.
    pub fn cell_id(&self, index: usize) -> String {
        match self {
            SweepAxis::Quantiles(v) => format!("q={}", v[index]),
            SweepAxis::Epsilon(v) => format!("eps={}", v[index]),
            SweepAxis::Ratio(v) => format!("r={}", v[index]),
            SweepAxis::Interp(v) => format!("interp={}", v[index]),
            SweepAxis::Strategy(v) => format!("strategy={}", v[index]),
        }
    }
}

/// A sweep: one axis crossed with seeded repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub repetitions: usize,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Dataset label recorded in every metrics row.
    pub name: String,
    pub source: DatasetSource,
    pub partition: PartitionSpec,
    pub protocol: ProtocolConfig,
    pub sweep: Option<Sweep>,
    pub output_dir: PathBuf,
}

// Seed-derivation tags keeping the independent randomness streams apart.
const SEED_DATA: u64 = 0x01;
const SEED_PARTITION: u64 = 0x02;
const SEED_NOISE: u64 = 0x03;
const SEED_RATIO: u64 = 0x04;

/// One metrics row: a (run, curve kind) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub mode: String,
    pub kind: CurveKind,
    pub q: usize,
    pub epsilon: Option<f64>,
    pub strategy: PrStrategy,
    pub interp: InterpMethod,
    pub seed: u64,
    pub cell: String,
    pub ae: f64,
    pub auc_or_ap: f64,
    pub comm_bytes: u64,
}

pub const METRICS_HEADER: &str =
    "dataset,mode,kind,Q,epsilon,strategy,interp,seed,cell,AE,AUC_or_AP,comm_bytes";

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.mode,
            self.kind,
            self.q,
            self.epsilon.map_or(String::new(), |e| e.to_string()),
            self.strategy,
            self.interp,
            self.seed,
            self.cell,
            self.ae,
            self.auc_or_ap,
            self.comm_bytes
        )
    }

    fn from_result(
        config: &ExperimentConfig,
        protocol: &ProtocolConfig,
        cell: &str,
        seed: u64,
        result: &RunResult,
    ) -> [MetricsRow; 2] {
        let base = MetricsRow {
            dataset: config.name.clone(),
            mode: protocol.mode.label().into(),
            kind: CurveKind::Roc,
            q: protocol.quantiles,
            epsilon: protocol.mode.epsilon(),
            strategy: protocol.pr_strategy,
            interp: protocol.interp,
            seed,
            cell: cell.into(),
            ae: result.ae_roc,
            auc_or_ap: result.auc,
            comm_bytes: result.comm_bytes_per_client,
        };
        let pr = MetricsRow {
            kind: CurveKind::Pr,
            ae: result.ae_pr,
            auc_or_ap: result.ap,
            ..base.clone()
        };
        [base, pr]
    }
}

/// Per-cell median summary across repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub cell: String,
    pub kind: CurveKind,
    pub repetitions: usize,
    pub median_ae: f64,
    pub median_auc_or_ap: f64,
}

pub const MEDIANS_HEADER: &str = "cell,kind,repetitions,median_AE,median_AUC_or_AP";

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// The protocol configuration a sweep cell runs with.
fn cell_protocol(base: &ProtocolConfig, axis: &SweepAxis, index: usize) -> Result<ProtocolConfig> {
    let mut p = base.clone();
    match axis {
        SweepAxis::Quantiles(v) => p.quantiles = v[index],
        SweepAxis::Epsilon(v) => match p.mode {
            Mode::Ddp { .. } => p.mode = Mode::Ddp { epsilon: v[index] },
            _ => {
                return Err(Error::Config(
                    "an epsilon sweep requires mode = ddp".into(),
                ))
            }
        },
        SweepAxis::Ratio(_) => {}
        SweepAxis::Interp(v) => p.interp = v[index],
        SweepAxis::Strategy(v) => p.pr_strategy = v[index],
    }
    Ok(p)
}

/// Target subsampling ratio of a cell, when the axis sweeps class imbalance.
fn cell_ratio(axis: &SweepAxis, index: usize) -> Option<f64> {
    match axis {
        SweepAxis::Ratio(v) => Some(v[index]),
        _ => None,
    }
}

/// Outcome of one seeded run inside a sweep or single execution.
struct JobOutcome {
    rows: [MetricsRow; 2],
    curves: Option<(String, RunResult)>, // cell id -> curves to persist
}

fn execute_job(
    config: &ExperimentConfig,
    cell_index: usize,
    rep: usize,
    write_curves: bool,
) -> Result<JobOutcome> {
    let master = config.protocol.seed;
    let rep_seed = rep as u64;

    let (cell, protocol, ratio) = match &config.sweep {
        Some(sweep) => (
            sweep.axis.cell_id(cell_index),
            cell_protocol(&config.protocol, &sweep.axis, cell_index)?,
            cell_ratio(&sweep.axis, cell_index),
        ),
        None => ("run".to_string(), config.protocol.clone(), None),
    };

    let mut data = config.source.load(rep_seed)?;
    if let Some(r) = ratio {
        data = subsample_ratio(&data, r, derive_seed(master, SEED_RATIO, rep_seed, 0))?;
    }

    let mut partition = config.partition.clone();
    partition.seed = derive_seed(master, SEED_PARTITION, rep_seed, 0);

    let noise_seed = derive_seed(master, SEED_NOISE, cell_index as u64, rep_seed);
    let protocol = ProtocolConfig {
        seed: noise_seed,
        ..protocol
    };

    let result = run(&data, &partition, &protocol)?;
    let rows = MetricsRow::from_result(config, &protocol, &cell, noise_seed, &result);
    Ok(JobOutcome {
        rows,
        curves: write_curves.then(|| (cell, result)),
    })
}

fn write_curve_files(dir: &Path, cell: &str, result: &RunResult) -> Result<()> {
    let cell_dir = dir.join("curves").join(cell);
    fs::create_dir_all(&cell_dir)?;
    fs::write(cell_dir.join("roc.csv"), result.roc.to_csv())?;
    fs::write(cell_dir.join("pr.csv"), result.pr.to_csv())?;
    Ok(())
}

fn write_lock_file(config: &ExperimentConfig) -> Result<()> {
    let lock = toml::to_string_pretty(config)
        .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    fs::write(config.output_dir.join("config.lock"), lock)?;
    Ok(())
}

/// Run the experiment once (no sweep axis) and persist curves plus two
/// metrics rows. Returns the run result for the caller to inspect.
pub fn run_single(config: &ExperimentConfig) -> Result<RunResult> {
    fs::create_dir_all(&config.output_dir)?;
    write_lock_file(config)?;
    let outcome = execute_job(config, 0, 0, true)?;
    let (cell, result) = outcome.curves.expect("curves requested");
    write_curve_files(&config.output_dir, &cell, &result)?;

    let mut table = String::from(METRICS_HEADER);
    table.push('\n');
    for row in &outcome.rows {
        table.push_str(&row.to_csv_line());
        table.push('\n');
    }
    fs::write(config.output_dir.join("metrics.csv"), table)?;
    Ok(result)
}

/// Sweep summary returned to the caller.
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<MetricsRow>,
    pub medians: Vec<MedianRow>,
}

/// Run the full sweep: every cell times every repetition, in parallel, with
/// deterministic per-job seeds. With `resume`, (cell, seed, kind) rows
/// already present in `metrics.csv` are kept and their jobs skipped.
pub fn run_sweep(config: &ExperimentConfig, resume: bool) -> Result<SweepOutcome> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep requested but no sweep axis configured".into()))?;
    if sweep.repetitions == 0 {
        return Err(Error::Config("sweep needs repetitions >= 1".into()));
    }
    if sweep.axis.cells() == 0 {
        return Err(Error::Config("sweep axis has no values".into()));
    }

    fs::create_dir_all(&config.output_dir)?;
    write_lock_file(config)?;
    let metrics_path = config.output_dir.join("metrics.csv");

    let mut existing: Vec<MetricsRow> = Vec::new();
    let mut done: HashSet<(String, u64)> = HashSet::new();
    if resume && metrics_path.exists() {
        existing = parse_metrics_csv(&fs::read_to_string(&metrics_path)?)?;
        done = existing
            .iter()
            .map(|r| (r.cell.clone(), r.seed))
            .collect();
    }

    let jobs: Vec<(usize, usize)> = (0..sweep.axis.cells())
        .flat_map(|c| (0..sweep.repetitions).map(move |r| (c, r)))
        .collect();

    let outcomes: Vec<Result<Option<JobOutcome>>> = jobs
        .par_iter()
        .map(|&(cell_index, rep)| {
            let cell = sweep.axis.cell_id(cell_index);
            let noise_seed =
                derive_seed(config.protocol.seed, SEED_NOISE, cell_index as u64, rep as u64);
            if done.contains(&(cell, noise_seed)) {
                return Ok(None);
            }
            execute_job(config, cell_index, rep, rep == 0).map(Some)
        })
        .collect();

    let mut rows = existing;
    for outcome in outcomes {
        let Some(outcome) = outcome? else { continue };
        if let Some((cell, result)) = &outcome.curves {
            write_curve_files(&config.output_dir, cell, result)?;
        }
        rows.extend(outcome.rows);
    }
    rows.sort_by(|a, b| (&a.cell, a.seed, a.kind == CurveKind::Pr)
        .cmp(&(&b.cell, b.seed, b.kind == CurveKind::Pr)));

    let mut table = String::from(METRICS_HEADER);
    table.push('\n');
    for row in &rows {
        table.push_str(&row.to_csv_line());
        table.push('\n');
    }
    fs::write(&metrics_path, table)?;

    // per-cell medians, in axis order
    let mut medians = Vec::new();
    for c in 0..sweep.axis.cells() {
        let cell = sweep.axis.cell_id(c);
        for kind in [CurveKind::Roc, CurveKind::Pr] {
            let mut aes: Vec<f64> = rows
                .iter()
                .filter(|r| r.cell == cell && r.kind == kind)
                .map(|r| r.ae)
                .collect();
            let mut aucs: Vec<f64> = rows
                .iter()
                .filter(|r| r.cell == cell && r.kind == kind)
                .map(|r| r.auc_or_ap)
                .collect();
            let n = aes.len();
            medians.push(MedianRow {
                cell: cell.clone(),
                kind,
                repetitions: n,
                median_ae: median(&mut aes),
                median_auc_or_ap: median(&mut aucs),
            });
        }
    }
    let mut med_table = String::from(MEDIANS_HEADER);
    med_table.push('\n');
    for m in &medians {
        med_table.push_str(&format!(
            "{},{},{},{},{}\n",
            m.cell, m.kind, m.repetitions, m.median_ae, m.median_auc_or_ap
        ));
    }
    fs::write(config.output_dir.join("medians.csv"), med_table)?;

    Ok(SweepOutcome { rows, medians })
}

/// Compute and persist the exact oracle curves (and AUC / AP) of a dataset.
pub fn write_exact(data: &LabeledScores, out_dir: &Path) -> Result<(f64, f64)> {
    let roc = curve::exact_roc(data)?;
    let pr = curve::exact_pr(data)?;
    let auc = auc_roc(&CurveFunction::from_estimate(&roc)?);
    let ap = average_precision(&CurveFunction::from_estimate(&pr)?);
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("roc.csv"), roc.to_csv())?;
    fs::write(out_dir.join("pr.csv"), pr.to_csv())?;
    fs::write(
        out_dir.join("summary.json"),
        serde_json::json!({
            "auc": auc,
            "ap": ap,
            "n_pos": data.n_pos(),
            "n_neg": data.n_neg(),
        })
        .to_string(),
    )?;
    Ok((auc, ap))
}

fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(Error::MalformedRow {
                row: i,
                reason: format!("expected 12 metric fields, got {}", f.len()),
            });
        }
        let bad = |what: &str| Error::MalformedRow {
            row: i,
            reason: format!("unparsable {what}"),
        };
        rows.push(MetricsRow {
            dataset: f[0].into(),
            mode: f[1].into(),
            kind: if f[2] == "PR" { CurveKind::Pr } else { CurveKind::Roc },
            q: f[3].parse().map_err(|_| bad("Q"))?,
            epsilon: if f[4].is_empty() {
                None
            } else {
                Some(f[4].parse().map_err(|_| bad("epsilon"))?)
            },
            strategy: f[5].parse()?,
            interp: f[6].parse()?,
            seed: f[7].parse().map_err(|_| bad("seed"))?,
            cell: f[8].into(),
            ae: f[9].parse().map_err(|_| bad("AE"))?,
            auc_or_ap: f[10].parse().map_err(|_| bad("AUC_or_AP"))?,
            comm_bytes: f[11].parse().map_err(|_| bad("comm_bytes"))?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Declarative TOML configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    dataset: RawDataset,
    #[serde(default)]
    partition: RawPartition,
    #[serde(default)]
    protocol: RawProtocol,
    sweep: Option<RawSweep>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    csv: Option<PathBuf>,
    range: Option<[f64; 2]>,
    n_pos: Option<usize>,
    n_neg: Option<usize>,
    pos_shape: Option<[f64; 2]>,
    neg_shape: Option<[f64; 2]>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    clients: usize,
    strategy: String,
    skew: f64,
    seed: u64,
}

impl Default for RawPartition {
    fn default() -> Self {
        Self {
            clients: 10,
            strategy: "iid".into(),
            skew: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    quantiles: usize,
    branching: usize,
    slack: usize,
    mode: String,
    epsilon: Option<f64>,
    pr_strategy: String,
    interp: String,
    grid_points: usize,
    seed: u64,
    strict_combine_budget: bool,
}

impl Default for RawProtocol {
    fn default() -> Self {
        Self {
            quantiles: 1024,
            branching: 2,
            slack: 2,
            mode: "sa".into(),
            epsilon: None,
            pr_strategy: "separate".into(),
            interp: "pchip".into(),
            grid_points: crate::protocol::DEFAULT_GRID_POINTS,
            seed: 0,
            strict_combine_budget: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: String,
    #[serde(default)]
    values: Vec<toml::Value>,
    repetitions: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Parse a declarative TOML experiment file into a resolved config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    resolve_config(raw)
}

/// Read and resolve a TOML experiment file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

fn resolve_config(raw: RawConfig) -> Result<ExperimentConfig> {
    let range = match raw.dataset.range {
        Some([lo, hi]) => ScoreRange::new(lo, hi)?,
        None => ScoreRange::unit(),
    };
    let (source, default_name) = match &raw.dataset.csv {
        Some(path) => {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into());
            (
                DatasetSource::Csv {
                    path: path.clone(),
                    range,
                },
                name,
            )
        }
        None => {
            let pos = raw.dataset.pos_shape.unwrap_or([5.0, 2.0]);
            let neg = raw.dataset.neg_shape.unwrap_or([2.0, 5.0]);
            let spec = SyntheticSpec {
                pos_dist: crate::data::BetaShape::new(pos[0], pos[1])?,
                neg_dist: crate::data::BetaShape::new(neg[0], neg[1])?,
                n_pos: raw.dataset.n_pos.unwrap_or(10_000),
                n_neg: raw.dataset.n_neg.unwrap_or(10_000),
                range,
                seed: raw.dataset.seed.unwrap_or(0),
            };
            (DatasetSource::Synthetic(spec), "synthetic".to_string())
        }
    };

    let strategy = match raw.partition.strategy.as_str() {
        "iid" => PartitionStrategy::Iid,
        "label-skew" => PartitionStrategy::LabelSkew {
            skew: raw.partition.skew,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown partition strategy `{other}` (expected iid|label-skew)"
            )))
        }
    };
    let partition = PartitionSpec {
        strategy,
        clients: raw.partition.clients,
        seed: raw.partition.seed,
    };

    let mode = match raw.protocol.mode.as_str() {
        "eq" => Mode::Eq,
        "sa" => Mode::Sa,
        "ddp" => Mode::Ddp {
            epsilon: raw.protocol.epsilon.ok_or_else(|| {
                Error::Config("mode = ddp requires an epsilon value".into())
            })?,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown mode `{other}` (expected eq|sa|ddp)"
            )))
        }
    };
    let protocol = ProtocolConfig {
        quantiles: raw.protocol.quantiles,
        branching: raw.protocol.branching,
        slack: raw.protocol.slack,
        mode,
        pr_strategy: raw.protocol.pr_strategy.parse()?,
        interp: raw.protocol.interp.parse()?,
        grid_points: raw.protocol.grid_points,
        seed: raw.protocol.seed,
        strict_combine_budget: raw.protocol.strict_combine_budget,
    };

    let sweep = match raw.sweep {
        None => None,
        Some(s) => {
            let floats = || -> Result<Vec<f64>> {
                s.values
                    .iter()
                    .map(|v| {
                        v.as_float()
                            .or_else(|| v.as_integer().map(|i| i as f64))
                            .ok_or_else(|| Error::Config("sweep values must be numbers".into()))
                    })
                    .collect()
            };
            let axis = match s.axis.as_str() {
                "quantiles" | "q" => SweepAxis::Quantiles(
                    s.values
                        .iter()
                        .map(|v| {
                            v.as_integer().map(|i| i as usize).ok_or_else(|| {
                                Error::Config("quantile sweep values must be integers".into())
                            })
                        })
                        .collect::<Result<_>>()?,
                ),
                "epsilon" | "eps" => SweepAxis::Epsilon(floats()?),
                "ratio" | "r" => SweepAxis::Ratio(floats()?),
                "interp" => SweepAxis::Interp(vec![InterpMethod::Linear, InterpMethod::Pchip]),
                "strategy" => {
                    SweepAxis::Strategy(vec![PrStrategy::Separate, PrStrategy::Combine])
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown sweep axis `{other}` (expected quantiles|epsilon|ratio|interp|strategy)"
                    )))
                }
            };
            if axis.cells() == 0 {
                return Err(Error::Config("sweep values must be nonempty".into()));
            }
            Some(Sweep {
                axis,
                repetitions: s.repetitions.unwrap_or(20),
            })
        }
    };

    let name = raw.name.unwrap_or(default_name);
    let output_dir = match raw.output.dir {
        Some(dir) => dir,
        None => {
            let root = std::env::var(OUTPUT_ROOT_ENV).unwrap_or_else(|_| "out".into());
            Path::new(&root).join(&name)
        }
    };

    Ok(ExperimentConfig {
        name,
        source,
        partition,
        protocol,
        sweep,
        output_dir,
    })
}
