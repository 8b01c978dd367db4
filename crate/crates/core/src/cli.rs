//! Experiment harness behind the `entroprop` binary: hyperparameter sweeps,
//! significance comparisons, weight-dump profiling and numerical self-checks.
//!
//! Everything here returns data or writes files; argument parsing and exit
//! codes live in `main.rs`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{load_cifar10, load_mnist, normalize_and_subset, Dataset, Split};
use crate::dump::{read_dump, write_dump};
use crate::entropy::{build_conv_matrix, profile_network, squarify_dense, ProfileReport};
use crate::error::{Error, Result};
use crate::loss::{LossForm, DEFAULT_EPSILON};
use crate::nn::{train_autoencoder, train_cnn, EntropyLayers, NetworkSpec, RunResult, TrainConfig};
use crate::stats::{format_delta, mean_ci95, significance_grid, welch_t, Direction, SignificanceGrid};
use crate::tensor::{conv2d, lu_logabsdet, matmul, matmul_a_bt, Matrix};

/// Environment variable consulted when no data directory is configured.
pub const DATA_DIR_ENV: &str = "ENTROPY_DATA_DIR";

pub const DEFAULT_LAMBDAS: [f64; 7] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    fn dir_name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Autoencoder,
    Cnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormName {
    Log,
    Recip,
}

/// A sweep: every architecture × λ × replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub task: Task,
    /// autoencoder latent widths, one architecture each
    pub latent_dims: Vec<usize>,
    /// CNN conv-block widths, one architecture per inner list
    pub widths: Vec<Vec<usize>>,
    /// λ₁ (autoencoder) or λ₂ (CNN) values
    pub lambdas: Vec<f64>,
    /// 1-based ordinals of the dense (autoencoder) or conv (CNN) layers
    /// carrying the entropy term
    pub layers: Vec<usize>,
    pub form: FormName,
    pub epsilon: f64,
    pub replications: usize,
    /// replication `r` trains with seed `seed + r`; the data subset uses `seed`
    pub seed: u64,
    pub subset: f64,
    pub val_subset: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// defaults to 1e-5 (autoencoder) / 0 (CNN) when absent
    pub min_delta: Option<f64>,
    pub lr: f64,
    pub alpha: f64,
    pub save_weights: bool,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            task: Task::Autoencoder,
            latent_dims: vec![180],
            widths: vec![vec![32]],
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            layers: vec![1],
            form: FormName::Recip,
            epsilon: DEFAULT_EPSILON,
            replications: 10,
            seed: 0,
            subset: 1.0,
            val_subset: 1.0,
            max_epochs: 100,
            batch_size: 128,
            patience: 7,
            min_delta: None,
            lr: 1e-3,
            alpha: 0.01,
            save_weights: false,
            data_dir: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string().replace('\n', " ")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("config file {} not found", path.display())));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lambdas.is_empty() {
            return bad("lambda list is empty".into());
        }
        if self.lambdas.iter().any(|l| !l.is_finite()) {
            return bad("lambdas must be finite".into());
        }
        if self.replications < 1 {
            return bad("replications must be >= 1".into());
        }
        if self.layers.iter().any(|&l| l == 0) {
            return bad("layer ordinals are 1-based".into());
        }
        match self.task {
            Task::Autoencoder if self.latent_dims.is_empty() || self.latent_dims.contains(&0) => {
                return bad("latent_dims must be nonempty and positive".into())
            }
            Task::Cnn if self.widths.is_empty() || self.widths.iter().any(|w| w.is_empty() || w.contains(&0)) => {
                return bad("widths must be nonempty lists of positive counts".into())
            }
            _ => {}
        }
        if !(self.subset > 0.0 && self.subset <= 1.0) || !(self.val_subset > 0.0 && self.val_subset <= 1.0) {
            return bad("subset fractions must lie in (0, 1]".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        self.train_config(0.0, 0).validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn form(&self) -> LossForm {
        match self.form {
            FormName::Log => LossForm::Log,
            FormName::Recip => LossForm::Reciprocal { epsilon: self.epsilon },
        }
    }

    /// Training configuration for one (λ, replication) cell.
    pub fn train_config(&self, lambda: f64, replication: usize) -> TrainConfig {
        let base = match self.task {
            Task::Autoencoder => TrainConfig::autoencoder(lambda),
            Task::Cnn => TrainConfig::cnn(lambda),
        };
        let ordinals = self.layers.iter().map(|l| l - 1).collect();
        let entropy_layers = match self.task {
            Task::Autoencoder => EntropyLayers {
                dense: ordinals,
                ..Default::default()
            },
            Task::Cnn => EntropyLayers {
                conv: ordinals,
                ..Default::default()
            },
        };
        TrainConfig {
            form: self.form(),
            entropy_layers,
            optimizer: crate::nn::AdamConfig {
                lr: self.lr,
                ..Default::default()
            },
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            min_delta: self.min_delta.unwrap_or(base.min_delta),
            seed: self.seed.wrapping_add(replication as u64),
            replications: self.replications,
            ..base
        }
    }

    /// Architecture labels in configuration order.
    pub fn architectures(&self) -> Vec<String> {
        match self.task {
            Task::Autoencoder => self.latent_dims.iter().map(|d| format!("latent={d}")).collect(),
            Task::Cnn => self
                .widths
                .iter()
                .map(|w| {
                    let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                    format!("widths={}", parts.join("-"))
                })
                .collect(),
        }
    }

    pub fn resolved_data_dir(&self) -> PathBuf {
        let root = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));
        let nested = root.join(self.dataset.dir_name());
        if nested.is_dir() {
            nested
        } else {
            root
        }
    }

    /// Normalized (and optionally subset) train and validation splits.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let dir = self.resolved_data_dir();
        let (train, val) = match self.dataset {
            DatasetKind::Mnist => (load_mnist(&dir, Split::Train)?, load_mnist(&dir, Split::Validation)?),
            DatasetKind::Cifar10 => (load_cifar10(&dir, Split::Train)?, load_cifar10(&dir, Split::Validation)?),
        };
        Ok((
            normalize_and_subset(&train, self.subset, self.seed)?,
            normalize_and_subset(&val, self.val_subset, self.seed)?,
        ))
    }
}

/// Flag-level overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub subset: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub layers: Option<Vec<usize>>,
    pub form: Option<FormName>,
    pub epsilon: Option<f64>,
    pub replications: Option<usize>,
    pub alpha: Option<f64>,
    pub dataset: Option<DatasetKind>,
    pub latent_dims: Option<Vec<usize>>,
    pub widths: Option<Vec<Vec<usize>>>,
    pub max_epochs: Option<usize>,
    pub val_subset: Option<f64>,
    pub save_weights: bool,
}

impl Overrides {
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$( if let Some(v) = self.$f { cfg.$g = v; } )*};
        }
        set!(seed => seed, subset => subset, lambdas => lambdas, layers => layers, form => form,
             epsilon => epsilon, replications => replications, alpha => alpha, dataset => dataset,
             latent_dims => latent_dims, widths => widths, max_epochs => max_epochs,
             val_subset => val_subset, out_dir => out_dir);
        if self.data_dir.is_some() {
            cfg.data_dir = self.data_dir;
        }
        cfg.save_weights |= self.save_weights;
    }
}

// ---------------------------------------------------------------------------
// CSV helpers

/// Nine significant digits, shortest round-trippable spelling of that value.
pub fn fmt_sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let v: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if v == 0.0 || (1e-4..1e9).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

pub const RUNS_HEADER: [&str; 7] = [
    "architecture",
    "lambda",
    "replication",
    "seed",
    "stopping_epoch",
    "final_train_metric",
    "final_val_metric",
];

/// One finished training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub architecture: String,
    pub lambda: f64,
    pub replication: usize,
    pub seed: u64,
    pub stopping_epoch: usize,
    pub final_train_metric: f64,
    pub final_val_metric: f64,
    pub wall_seconds: f64,
}

pub fn write_runs_csv(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUNS_HEADER)?;
    for r in rows {
        w.write_record([
            r.architecture.clone(),
            fmt_sig9(r.lambda),
            r.replication.to_string(),
            r.seed.to_string(),
            r.stopping_epoch.to_string(),
            fmt_sig9(r.final_train_metric),
            fmt_sig9(r.final_val_metric),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the columns of [`RUNS_HEADER`] (wall time is not stored there).
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>> {
    if !path.exists() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("{} lacks column {name}", path.display())))
    };
    let idx: Vec<usize> = RUNS_HEADER.iter().map(|h| col(h)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i).parse().map_err(|_| {
                Error::InvalidArgument(format!("row {}: bad {} {:?}", line + 2, RUNS_HEADER[i], field(i)))
            })
        };
        rows.push(RunRow {
            architecture: field(0).to_string(),
            lambda: num(1)?,
            replication: num(2)? as usize,
            seed: num(3)? as u64,
            stopping_epoch: num(4)? as usize,
            final_train_metric: num(5)?,
            final_val_metric: num(6)?,
            wall_seconds: f64::NAN,
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    FinalVal,
    FinalTrain,
    StoppingEpoch,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::FinalVal => "final_val_metric",
            Metric::FinalTrain => "final_train_metric",
            Metric::StoppingEpoch => "stopping_epoch",
        }
    }

    fn of(self, r: &RunRow) -> f64 {
        match self {
            Metric::FinalVal => r.final_val_metric,
            Metric::FinalTrain => r.final_train_metric,
            Metric::StoppingEpoch => r.stopping_epoch as f64,
        }
    }
}

/// `(architecture, [(λ, values)])` in first-appearance / ascending-λ order.
pub type Groups = Vec<(String, Vec<(f64, Vec<f64>)>)>;

pub fn group_runs(rows: &[RunRow], metric: Metric) -> Groups {
    let mut out: Groups = Vec::new();
    for r in rows {
        let arch = match out.iter().position(|(a, _)| *a == r.architecture) {
            Some(i) => i,
            None => {
                out.push((r.architecture.clone(), vec![]));
                out.len() - 1
            }
        };
        let lams = &mut out[arch].1;
        match lams.iter().position(|(l, _)| l.to_bits() == r.lambda.to_bits()) {
            Some(i) => lams[i].1.push(metric.of(r)),
            None => lams.push((r.lambda, vec![metric.of(r)])),
        }
    }
    for (_, lams) in &mut out {
        lams.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn lambda_label(l: f64) -> String {
    fmt_sig9(l)
}

fn grid_for(lams: &[(f64, Vec<f64>)], alpha: f64, direction: Direction) -> Result<SignificanceGrid> {
    let groups: Vec<(String, Vec<f64>)> = lams.iter().map(|(l, v)| (lambda_label(*l), v.clone())).collect();
    significance_grid(&groups, alpha, direction)
}

pub fn write_aggregate_csv(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "architecture",
        "lambda",
        "n",
        "mean_final_val_metric",
        "ci95_final_val_metric",
        "mean_final_train_metric",
        "ci95_final_train_metric",
        "mean_stopping_epoch",
        "ci95_stopping_epoch",
    ])?;
    let metrics = [Metric::FinalVal, Metric::FinalTrain, Metric::StoppingEpoch];
    let per_metric: Vec<Groups> = metrics.iter().map(|&m| group_runs(rows, m)).collect();
    for (a, (arch, lams)) in per_metric[0].iter().enumerate() {
        for (li, (lambda, values)) in lams.iter().enumerate() {
            let mut rec = vec![arch.clone(), fmt_sig9(*lambda), values.len().to_string()];
            for g in &per_metric {
                let v = &g[a].1[li].1;
                let m = v.iter().sum::<f64>() / v.len() as f64;
                rec.push(fmt_sig9(m));
                rec.push(fmt_opt(mean_ci95(v).ok().map(|c| c.1)));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const GRID_HEADER: [&str; 5] = ["architecture", "metric", "row_lambda", "col_lambda", "cell"];

fn grid_records(arch: &str, metric: Metric, grid: &SignificanceGrid) -> Vec<[String; 5]> {
    let n = grid.labels.len();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push([
                arch.to_string(),
                metric.name().to_string(),
                grid.labels[i].clone(),
                grid.labels[j].clone(),
                grid.cell(i, j).symbol().to_string(),
            ]);
        }
    }
    out
}

/// Significance grids for every architecture with ≥ 2 λ groups of ≥ 2 runs.
pub fn sweep_grids(rows: &[RunRow], metrics: &[(Metric, Direction)], alpha: f64) -> Result<Vec<(String, Metric, SignificanceGrid)>> {
    let mut out = vec![];
    for &(metric, dir) in metrics {
        for (arch, lams) in group_runs(rows, metric) {
            if lams.len() >= 2 && lams.iter().all(|(_, v)| v.len() >= 2) {
                out.push((arch, metric, grid_for(&lams, alpha, dir)?));
            }
        }
    }
    Ok(out)
}

pub fn write_grid_csv(path: &Path, grids: &[(String, Metric, SignificanceGrid)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GRID_HEADER)?;
    for (arch, metric, grid) in grids {
        for rec in grid_records(arch, *metric, grid) {
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train sweep

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<RunRow>,
    /// `(architecture index, λ, replication)` → full result
    pub results: BTreeMap<(usize, u64, usize), RunResult>,
    pub grids: Vec<(String, Metric, SignificanceGrid)>,
}

/// Runs a sweep on already-loaded data without touching the filesystem.
pub fn run_sweep(cfg: &ExperimentConfig, train: &Dataset, val: &Dataset) -> Result<SweepOutcome> {
    cfg.validate()?;
    let archs = cfg.architectures();
    let mut rows = Vec::new();
    let mut results = BTreeMap::new();
    for (a, arch) in archs.iter().enumerate() {
        for &lambda in &cfg.lambdas {
            for rep in 0..cfg.replications {
                let tc = cfg.train_config(lambda, rep);
                let r = match cfg.task {
                    Task::Autoencoder => train_autoencoder(&tc, cfg.latent_dims[a], train, val)?,
                    Task::Cnn => train_cnn(&tc, &cfg.widths[a], train, val)?,
                };
                rows.push(RunRow {
                    architecture: arch.clone(),
                    lambda,
                    replication: rep,
                    seed: r.seed,
                    stopping_epoch: r.stopping_epoch,
                    final_train_metric: r.final_train(),
                    final_val_metric: r.final_val(),
                    wall_seconds: r.wall_seconds,
                });
                results.insert((a, lambda.to_bits(), rep), r);
            }
        }
    }
    // (architecture, λ, seed) order regardless of execution order
    let order: BTreeMap<&String, usize> = archs.iter().enumerate().map(|(i, a)| (a, i)).collect();
    rows.sort_by(|x, y| {
        order[&x.architecture]
            .cmp(&order[&y.architecture])
            .then(x.lambda.total_cmp(&y.lambda))
            .then(x.seed.cmp(&y.seed))
    });
    let val_dir = match cfg.task {
        Task::Autoencoder => Direction::LowerIsBetter,
        Task::Cnn => Direction::HigherIsBetter,
    };
    let grids = sweep_grids(
        &rows,
        &[(Metric::FinalVal, val_dir), (Metric::StoppingEpoch, Direction::LowerIsBetter)],
        cfg.alpha,
    )?;
    Ok(SweepOutcome { rows, results, grids })
}

/// Paths of the files a sweep writes.
#[derive(Clone, Debug)]
pub struct SweepFiles {
    pub runs: PathBuf,
    pub aggregate: PathBuf,
    pub grid: PathBuf,
    pub timing: PathBuf,
    pub config: PathBuf,
}

/// Loads data, runs the sweep and writes `runs.csv`, `aggregate.csv`,
/// `grid.csv`, `timing.csv` and the effective `config.toml` to `out_dir`.
pub fn cmd_train_sweep(cfg: &ExperimentConfig) -> Result<(SweepOutcome, SweepFiles)> {
    cfg.validate()?;
    let (train, val) = cfg.load_data()?;
    let outcome = run_sweep(cfg, &train, &val)?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    let files = SweepFiles {
        runs: out.join("runs.csv"),
        aggregate: out.join("aggregate.csv"),
        grid: out.join("grid.csv"),
        timing: out.join("timing.csv"),
        config: out.join("config.toml"),
    };
    let mut echoed = cfg.clone();
    echoed.data_dir = Some(cfg.resolved_data_dir());
    std::fs::write(&files.config, echoed.to_toml())?;
    write_runs_csv(&files.runs, &outcome.rows)?;
    write_aggregate_csv(&files.aggregate, &outcome.rows)?;
    write_grid_csv(&files.grid, &outcome.grids)?;

    // wall-clock lives apart from runs.csv so that file stays byte-stable
    let mut w = csv::Writer::from_path(&files.timing)?;
    w.write_record(["architecture", "lambda", "seed", "wall_seconds"])?;
    for r in &outcome.rows {
        w.write_record([r.architecture.clone(), fmt_sig9(r.lambda), r.seed.to_string(), format!("{:.3}", r.wall_seconds)])?;
    }
    w.flush()?;

    if cfg.save_weights {
        let dir = out.join("weights");
        std::fs::create_dir_all(&dir)?;
        let archs = cfg.architectures();
        for ((a, lbits, rep), r) in &outcome.results {
            let spec = spec_for(cfg, *a, &train)?;
            let name = format!("{}_lambda{}_rep{rep}.entw", archs[*a], fmt_sig9(f64::from_bits(*lbits)));
            write_dump(&spec, &r.params, dir.join(name))?;
        }
    }
    Ok((outcome, files))
}

fn spec_for(cfg: &ExperimentConfig, arch: usize, train: &Dataset) -> Result<NetworkSpec> {
    let shape = train
        .image_shape()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    match cfg.task {
        Task::Autoencoder => Ok(NetworkSpec::autoencoder(shape.0 * shape.1 * shape.2, cfg.latent_dims[arch])),
        Task::Cnn => NetworkSpec::cnn(shape, &cfg.widths[arch], crate::datasets::NUM_CLASSES),
    }
}

// ---------------------------------------------------------------------------
// compare

/// One λ group against the baseline group of its architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub architecture: String,
    pub lambda: f64,
    pub baseline_lambda: f64,
    /// `mean(group) − mean(baseline)`
    pub delta: f64,
    /// one-tailed p for "the group is better than the baseline"
    pub p_one_tailed: f64,
}

impl Comparison {
    pub fn annotation(&self) -> String {
        format_delta(self.delta, self.p_one_tailed)
    }
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub metric: Metric,
    pub grids: Vec<(String, SignificanceGrid)>,
    pub comparisons: Vec<Comparison>,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (arch, grid) in &self.grids {
            let _ = writeln!(s, "{arch} — {} (alpha = {})", self.metric.name(), grid.alpha);
            s.push_str(&grid.render());
            s.push('\n');
        }
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "{} lambda={} vs {}: {}",
                c.architecture,
                lambda_label(c.lambda),
                lambda_label(c.baseline_lambda),
                c.annotation()
            );
        }
        s
    }
}

/// One-tailed p that `a`'s mean beats `b`'s in `direction`.
fn one_tailed_better(a: &[f64], b: &[f64], direction: Direction) -> Result<f64> {
    let (hi, lo) = match direction {
        Direction::HigherIsBetter => (a, b),
        Direction::LowerIsBetter => (b, a),
    };
    match welch_t(hi, lo) {
        Ok(r) => Ok(r.p_one_tailed),
        Err(Error::UndefinedVariance(_)) => {
            let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Ok(if m(hi) > m(lo) { 0.0 } else { 1.0 })
        }
        Err(e) => Err(e),
    }
}

/// Grids (two-tailed, `alpha`) and baseline comparisons (one-tailed) from
/// run rows. The baseline is λ = 0 when present, else the smallest λ.
pub fn compare_runs(rows: &[RunRow], metric: Metric, alpha: f64, direction: Direction) -> Result<CompareReport> {
    let groups = group_runs(rows, metric);
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no runs to compare".into()));
    }
    let mut grids = vec![];
    let mut comparisons = vec![];
    for (arch, lams) in &groups {
        if lams.len() < 2 {
            return Err(Error::InvalidArgument(format!("{arch}: need at least 2 lambda groups")));
        }
        if let Some((l, v)) = lams.iter().find(|(_, v)| v.len() < 2) {
            return Err(Error::InvalidArgument(format!(
                "{arch} lambda={}: {} replication(s), need at least 2",
                lambda_label(*l),
                v.len()
            )));
        }
        grids.push((arch.clone(), grid_for(lams, alpha, direction)?));
        let base = lams.iter().position(|(l, _)| *l == 0.0).unwrap_or(0);
        let (bl, bv) = &lams[base];
        for (i, (l, v)) in lams.iter().enumerate() {
            if i == base {
                continue;
            }
            let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
            comparisons.push(Comparison {
                architecture: arch.clone(),
                lambda: *l,
                baseline_lambda: *bl,
                delta: m(v) - m(bv),
                p_one_tailed: one_tailed_better(v, bv, direction)?,
            });
        }
    }
    Ok(CompareReport {
        metric,
        grids,
        comparisons,
    })
}

pub fn cmd_compare(
    runs_csv: &Path,
    metric: Metric,
    alpha: f64,
    direction: Direction,
    out_dir: Option<&Path>,
) -> Result<CompareReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    let rows = read_runs_csv(runs_csv)?;
    let report = compare_runs(&rows, metric, alpha, direction)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let grids: Vec<_> = report.grids.iter().map(|(a, g)| (a.clone(), metric, g.clone())).collect();
        write_grid_csv(&dir.join("grid.csv"), &grids)?;
        let mut w = csv::Writer::from_path(dir.join("comparison.csv"))?;
        w.write_record(["architecture", "metric", "lambda", "baseline_lambda", "delta", "p_one_tailed", "annotation"])?;
        for c in &report.comparisons {
            w.write_record([
                c.architecture.clone(),
                metric.name().to_string(),
                fmt_sig9(c.lambda),
                fmt_sig9(c.baseline_lambda),
                fmt_sig9(c.delta),
                fmt_sig9(c.p_one_tailed),
                c.annotation(),
            ])?;
        }
        w.flush()?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// profile

pub const PROFILE_HEADER: [&str; 16] = [
    "layer_index",
    "kind",
    "input_l",
    "input_w",
    "units",
    "mean_total",
    "q1_total",
    "median_total",
    "q3_total",
    "mean_per_element",
    "q1_per_element",
    "median_per_element",
    "q3_per_element",
    "outliers",
    "min_total",
    "max_total",
];

pub fn profile_records(report: &ProfileReport) -> Vec<Vec<String>> {
    report
        .layers
        .iter()
        .map(|l| {
            let totals = l.units.iter().map(|u| u.delta_total);
            let min = totals.clone().fold(f64::INFINITY, f64::min);
            let max = totals.fold(f64::NEG_INFINITY, f64::max);
            vec![
                l.layer_index.to_string(),
                l.kind.as_str().to_string(),
                l.dims.0.to_string(),
                l.dims.1.to_string(),
                l.units.len().to_string(),
                fmt_sig9(l.total.mean),
                fmt_sig9(l.total.q1),
                fmt_sig9(l.total.median),
                fmt_sig9(l.total.q3),
                fmt_sig9(l.per_element.mean),
                fmt_sig9(l.per_element.q1),
                fmt_sig9(l.per_element.median),
                fmt_sig9(l.per_element.q3),
                l.outliers.len().to_string(),
                fmt_sig9(min),
                fmt_sig9(max),
            ]
        })
        .collect()
}

/// Profiles a weight dump for an `input_h x input_w` input and writes
/// `profile.csv` into `out_dir`.
pub fn cmd_profile(dump: &Path, input_h: usize, input_w: usize, out_dir: &Path) -> Result<(ProfileReport, PathBuf)> {
    let (spec, params) = read_dump(dump)?;
    let report = profile_network(&spec, &params, input_h, input_w)?;
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("profile.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(PROFILE_HEADER)?;
    for rec in profile_records(&report) {
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok((report, path))
}

// ---------------------------------------------------------------------------
// oracle self-checks

/// Deliberately wrong formulas, to prove the checks can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Corruption {
    #[default]
    None,
    /// off-by-one output count in the conv entropy formula
    ConvDeltaOffByOne,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    /// `(check name, cases run, worst error)`
    pub checks: Vec<(&'static str, usize, f64)>,
    /// dense draws rejected as too ill-conditioned for the covariance route
    pub resampled: usize,
}

impl OracleReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (name, n, err) in &self.checks {
            let _ = writeln!(s, "{name:<22} {n:>6} cases  ok  (max error {err:.3e})");
        }
        let _ = writeln!(s, "({} ill-conditioned dense draws resampled)", self.resampled);
        s
    }
}

/// Square parts above this `‖A‖_F·‖A⁻¹‖_F` are redrawn in the Gaussian check.
pub const MAX_GAUSSIAN_CONDITION: f64 = 1e3;

fn frobenius_condition(a: &Matrix) -> Result<f64> {
    let lu = crate::tensor::Lu::factor(a)?;
    if lu.is_singular() {
        return Ok(f64::INFINITY);
    }
    let norm = |m: &Matrix| m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(norm(a) * norm(&lu.inverse_transpose()?))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn fail(check: &str, detail: String) -> Error {
    Error::CheckFailed(format!("{check}: {detail}"))
}

/// Randomized verification, `cases` instances per check with every
/// dimension in `1..=max_dim`:
///
/// * conv-matrix: `reshape(C_M · vec(X)) = conv2d(X, C)` (1e-12, relative to the output scale);
/// * determinant: `log|det C_M'| = (l-p+1)(w-q+1)·ln|c₁₁|` for `|c₁₁| ∈ [0.1, 10]` (1e-9);
/// * squarify: `log|det W'| = log|det W_s|` for wide, square and tall `W` (1e-8);
/// * gaussian: `½(log det(W'ΣW'ᵀ) − log det Σ) = log|det W'|` for SPD `Σ` (1e-8),
///   on draws whose square part has Frobenius condition number ≤ [`MAX_GAUSSIAN_CONDITION`].
pub fn cmd_oracle_check(max_dim: usize, cases: usize, seed: u64, corruption: Corruption) -> Result<OracleReport> {
    if max_dim == 0 || max_dim > 10 {
        return Err(Error::InvalidArgument(format!("max_dim {max_dim} outside 1..=10")));
    }
    if cases == 0 {
        return Err(Error::InvalidArgument("cases must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![];

    let mut worst = 0.0f64;
    let mut worst_det = 0.0f64;
    for case in 0..cases {
        let l = rng.gen_range(1..=max_dim);
        let w = rng.gen_range(1..=max_dim);
        let p = rng.gen_range(1..=l.min(4));
        let q = rng.gen_range(1..=w.min(4));
        let mut filter = random_matrix(&mut rng, p, q);
        let mag = 10f64.powf(rng.gen_range(-1.0..1.0));
        filter.as_mut_slice()[0] = if rng.gen::<bool>() { mag } else { -mag };
        let x = random_matrix(&mut rng, l, w);
        let cm = build_conv_matrix(&filter, l, w)?;
        let by_matrix = cm.apply(&x)?;
        let direct = conv2d(&x, &filter)?;
        let scale = direct.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let err = by_matrix.max_abs_diff(&direct) / scale;
        if !(err <= 1e-12) {
            return Err(fail(
                "conv-matrix",
                format!("case {case}: l={l} w={w} filter={filter:?} x={x:?} error {err:e}"),
            ));
        }
        worst = worst.max(err);

        let ld = lu_logabsdet(&cm.cm_prime)?;
        let outputs = match corruption {
            Corruption::None => ((l - p + 1) * (w - q + 1)) as f64,
            Corruption::ConvDeltaOffByOne => ((l - p) * (w - q + 1)) as f64,
        };
        let expected = outputs * filter[(0, 0)].abs().ln();
        let err = (ld.log_abs - expected).abs();
        if !(err <= 1e-9) {
            return Err(fail(
                "determinant",
                format!(
                    "case {case}: l={l} w={w} filter={filter:?}: log|det C_M'| = {} but formula gives {expected}",
                    ld.log_abs
                ),
            ));
        }
        worst_det = worst_det.max(err);
    }
    checks.push(("conv-matrix", cases, worst));
    checks.push(("determinant", cases, worst_det));

    let mut worst_sq = 0.0f64;
    let mut worst_g = 0.0f64;
    let mut resampled = 0usize;
    for case in 0..cases {
        // the covariance route squares the condition number of W', so keep
        // to instances where that route is itself accurate to ~1e-9
        let (wmat, sq) = loop {
            let n = rng.gen_range(1..=max_dim);
            let d = rng.gen_range(1..=max_dim);
            let wmat = random_matrix(&mut rng, n, d);
            let sq = squarify_dense(&wmat)?;
            if frobenius_condition(&sq.square_part)? <= MAX_GAUSSIAN_CONDITION {
                break (wmat, sq);
            }
            resampled += 1;
        };
        let lhs = lu_logabsdet(&sq.wprime)?;
        let rhs = lu_logabsdet(&sq.square_part)?;
        let err = (lhs.log_abs - rhs.log_abs).abs();
        if !(err <= 1e-8) || lhs.sign == 0 {
            return Err(fail(
                "squarify",
                format!("case {case}: W={wmat:?}: log|det W'| = {} vs square part {}", lhs.log_abs, rhs.log_abs),
            ));
        }
        worst_sq = worst_sq.max(err);

        let m = sq.wprime.rows();
        let a = random_matrix(&mut rng, m, m);
        let mut sigma = matmul_a_bt(&a, &a)?;
        for i in 0..m {
            sigma.as_mut_slice()[i * m + i] += 1.0;
        }
        let out_cov = matmul_a_bt(&matmul(&sq.wprime, &sigma)?, &sq.wprime)?;
        let half_delta = 0.5 * (lu_logabsdet(&out_cov)?.log_abs - lu_logabsdet(&sigma)?.log_abs);
        let err = (half_delta - lhs.log_abs).abs();
        if !(err <= 1e-8) {
            return Err(fail(
                "gaussian",
                format!("case {case}: W'={:?}: ½Δ log det Σ = {half_delta} vs log|det W'| = {}", sq.wprime, lhs.log_abs),
            ));
        }
        worst_g = worst_g.max(err);
    }
    checks.push(("squarify", cases, worst_sq));
    checks.push(("gaussian", cases, worst_g));
    Ok(OracleReport { checks, resampled })
}

/// Parses `"0,1e-4,0.01"`.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("not a number: {t:?}")))
        })
        .collect()
}

/// Parses `"1,3"`.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("not a count: {t:?}")))
        })
        .collect()
}

/// Parses `"32;32-64"` into `[[32], [32, 64]]`.
pub fn parse_widths(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';').map(|arch| parse_usize_list(&arch.replace('-', ","))).collect()
}
