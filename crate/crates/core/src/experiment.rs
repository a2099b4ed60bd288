//! The experiment protocol: load, mask, train, impute, score, aggregate and
//! report, over a grid of masking rates with seeded repeats.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::data::{self, apply_mask, split_inductive, CsvSchema, IncompleteDataset, MaskSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::meanfield::{self, decode_multiclass, impute_row, ImputationConfig};
use crate::metrics::{self, aggregate, GridRow, MetricsReport};
use crate::model::RbmModel;
use crate::seed::{self, tag};
use crate::train::{self, NegativePhase, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Transductive,
    Inductive,
}

/// Where the data comes from. A directory is read as an MNIST IDX pair,
/// anything else as a CSV with a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSource {
    pub path: PathBuf,
    /// CSV schema; defaults to the dataset path with a `.schema` extension.
    pub schema: Option<PathBuf>,
}

impl DatasetSource {
    pub fn load(&self) -> Result<IncompleteDataset> {
        if self.path.is_dir() {
            let find = |needle: &str| -> Result<PathBuf> {
                let entries = fs::read_dir(&self.path)
                    .map_err(|e| Error::io(self.path.display().to_string(), e))?;
                let mut hits: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().contains(needle)))
                    .collect();
                hits.sort();
                hits.into_iter().next().ok_or_else(|| {
                    Error::Config(format!("no *{needle}* file in {}", self.path.display()))
                })
            };
            return data::load_mnist_idx(&find("idx3-ubyte")?, &find("idx1-ubyte")?);
        }
        let schema_path = self
            .schema
            .clone()
            .unwrap_or_else(|| self.path.with_extension("schema"));
        let schema = CsvSchema::from_file(&schema_path)?;
        data::load_csv(&self.path, &schema)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<DatasetSource>,
    pub mode: Mode,
    pub q_fea: Vec<f64>,
    pub q_label: Vec<f64>,
    pub train: TrainConfig,
    pub imputation: ImputationConfig,
    pub n_repeats: usize,
    pub base_seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Random row subsample applied after loading.
    pub limit: Option<usize>,
    pub train_fraction: f64,
    /// Rows with hidden labels used to evaluate the stopping metric; `None`
    /// uses all of them.
    pub stop_rows: Option<usize>,
    /// Restarts used by the stopping metric's imputations.
    pub stop_restarts: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            mode: Mode::Transductive,
            q_fea: vec![0.5],
            q_label: vec![0.3],
            train: TrainConfig::default(),
            imputation: ImputationConfig::default(),
            n_repeats: 10,
            base_seed: 0,
            out_dir: None,
            limit: None,
            train_fraction: 0.7,
            stop_rows: None,
            stop_restarts: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "none" | "all" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl ExperimentConfig {
    /// Set one option by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let t = &mut self.train;
        match k {
            "dataset" => {
                let schema = self.dataset.take().and_then(|d| d.schema);
                self.dataset = Some(DatasetSource { path: value.trim().into(), schema });
            }
            "schema" => {
                let d = self.dataset.get_or_insert_with(|| DatasetSource {
                    path: PathBuf::new(),
                    schema: None,
                });
                d.schema = Some(value.trim().into());
            }
            "mode" | "negative_phase" => t.negative_phase = parse::<NegativePhase>(k, value)?,
            "q_fea" => self.q_fea = parse_list(k, value)?,
            "q_label" | "q_ml" | "q_mc" => self.q_label = parse_list(k, value)?,
            "repeats" | "n_repeats" => self.n_repeats = parse(k, value)?,
            "seed" | "base_seed" => self.base_seed = parse(k, value)?,
            "out" | "out_dir" => self.out_dir = Some(value.trim().into()),
            "limit" => self.limit = optional(k, value)?,
            "train_fraction" => self.train_fraction = parse(k, value)?,
            "stop_rows" => self.stop_rows = optional(k, value)?,
            "stop_restarts" => self.stop_restarts = optional(k, value)?,
            "epochs" | "max_epochs" => t.max_epochs = parse(k, value)?,
            "patience" | "patience_epochs" => t.patience_epochs = parse(k, value)?,
            "eval_every" => t.eval_every = parse(k, value)?,
            "learning_rate" | "lr" => t.learning_rate = parse(k, value)?,
            "minibatch_size" | "batch_size" => t.minibatch_size = parse(k, value)?,
            "k_gibbs" | "k" => t.k_gibbs = parse(k, value)?,
            "n_hidden" | "hidden" => t.n_hidden = parse(k, value)?,
            "n_persistent_chains" => t.n_persistent_chains = optional(k, value)?,
            "weight_std" => t.weight_std = parse(k, value)?,
            "momentum" => t.momentum = parse(k, value)?,
            "weight_decay" => t.weight_decay = parse(k, value)?,
            "n_restarts" | "restarts" => self.imputation.n_restarts = parse(k, value)?,
            "n_iterations" | "iterations" => self.imputation.n_iterations = parse(k, value)?,
            "damping" => self.imputation.damping = parse(k, value)?,
            "parallel" => {
                let on: bool = parse(k, value)?;
                let exec = if on { Exec::Parallel } else { Exec::Sequential };
                t.exec = exec;
                self.imputation.exec = exec;
            }
            _ => return Err(Error::Config(format!("unknown option '{key}'"))),
        }
        Ok(())
    }

    /// Apply a `key = value` file; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_fea.is_empty() || self.q_label.is_empty() {
            return Err(Error::Config("masking-rate grids must be nonempty".into()));
        }
        for &q in self.q_fea.iter().chain(&self.q_label) {
            MaskSpec::new(q, 0.0, 0)?;
        }
        if self.n_repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.dataset.as_ref().is_none_or(|d| d.path.as_os_str().is_empty()) {
            return Err(Error::Config("no dataset given".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        self.train.validate()?;
        self.imputation.validate()
    }

    /// Load the dataset and apply the row limit.
    pub fn load_dataset(&self) -> Result<IncompleteDataset> {
        let source = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset given".into()))?;
        let ds = source.load()?;
        Ok(match self.limit {
            Some(n) => ds.subsample(n, self.base_seed),
            None => ds,
        })
    }
}

/// Seed of one repeat of one grid cell.
pub fn repeat_seed(base_seed: u64, q_fea: f64, q_label: f64, repeat: usize) -> u64 {
    seed::derive(base_seed, &[q_fea.to_bits(), q_label.to_bits(), repeat as u64])
}

/// Cells whose free labels / class groups are hidden in the given rows.
struct LabelTargets {
    /// `(row, column)` of hidden free-label cells with ground truth.
    free: Vec<(usize, usize)>,
    /// `(row, group)` of hidden class groups with a known class.
    groups: Vec<(usize, usize, usize)>,
}

fn label_targets(data: &IncompleteDataset) -> LabelTargets {
    let layout = data.layout();
    let reveal = data.reveal();
    let mut free = Vec::new();
    for r in 0..data.n_rows() {
        for &l in &layout.free_labels() {
            if reveal.is_masked(r, l) {
                free.push((r, l));
            }
        }
    }
    let mut groups = Vec::new();
    for (g, group) in layout.class_groups().iter().enumerate() {
        for r in 0..data.n_rows() {
            if !group.iter().all(|&c| reveal.is_masked(r, c)) {
                continue;
            }
            if let Some(k) = group.iter().position(|&c| reveal.truth(r, c) == Some(1.0)) {
                groups.push((r, g, k));
            }
        }
    }
    LabelTargets { free, groups }
}

/// Label AUC over hidden labels: micro AUC for free labels, averaged AUC for
/// each class group, and the mean of whichever are defined.
fn label_auc(data: &IncompleteDataset, imputed: &dyn Fn(usize, usize) -> f64, targets: &LabelTargets) -> Option<f64> {
    let mut parts = Vec::new();
    if !targets.free.is_empty() {
        let scores: Vec<f64> = targets.free.iter().map(|&(r, c)| imputed(r, c)).collect();
        let truth: Vec<bool> = targets
            .free
            .iter()
            .map(|&(r, c)| data.reveal().truth(r, c) == Some(1.0))
            .collect();
        parts.extend(metrics::micro_auc(&scores, &truth).ok());
    }
    for (g, group) in data.layout().class_groups().iter().enumerate() {
        let rows: Vec<&(usize, usize, usize)> = targets.groups.iter().filter(|t| t.1 == g).collect();
        let scores: Vec<Vec<f64>> = rows
            .iter()
            .map(|&&(r, _, _)| group.iter().map(|&c| imputed(r, c)).collect())
            .collect();
        let truth: Vec<usize> = rows.iter().map(|t| t.2).collect();
        parts.extend(metrics::averaged_auc(&scores, &truth).ok());
    }
    (!parts.is_empty()).then(|| parts.iter().sum::<f64>() / parts.len() as f64)
}

/// Stopping metric: label AUC on the hidden labels of `data`, computed from
/// mean-field imputations of (a fixed subset of) the rows holding them.
pub struct HiddenLabelAuc<'a> {
    data: &'a IncompleteDataset,
    rows: Vec<usize>,
    targets: LabelTargets,
    config: ImputationConfig,
}

impl<'a> HiddenLabelAuc<'a> {
    pub fn new(data: &'a IncompleteDataset, max_rows: Option<usize>, config: ImputationConfig, seed: u64) -> Self {
        let all = label_targets(data);
        let mut rows: Vec<usize> = all
            .free
            .iter()
            .map(|t| t.0)
            .chain(all.groups.iter().map(|t| t.0))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        if let Some(n) = max_rows {
            if n < rows.len() {
                rows.shuffle(&mut seed::rng(seed, &[tag::STOPPER]));
                rows.truncate(n);
                rows.sort_unstable();
            }
        }
        let keep = |r: &usize| rows.binary_search(r).is_ok();
        let targets = LabelTargets {
            free: all.free.into_iter().filter(|t| keep(&t.0)).collect(),
            groups: all.groups.into_iter().filter(|t| keep(&t.0)).collect(),
        };
        HiddenLabelAuc { data, rows, targets, config }
    }
}

impl train::StoppingMetric for HiddenLabelAuc<'_> {
    fn evaluate(&mut self, model: &RbmModel, _epoch: usize) -> Result<Option<f64>> {
        if self.rows.is_empty() {
            return Ok(None);
        }
        let view = self.data.view();
        let imputed = self
            .config
            .exec
            .try_map(self.rows.len(), |k| {
                let r = self.rows[k];
                impute_row(model, view.row(r), r, &self.config).map(|i| i.visible)
            })?;
        let lookup = |r: usize, c: usize| imputed[self.rows.binary_search(&r).expect("stopping row")][c];
        Ok(label_auc(self.data, &lookup, &self.targets))
    }
}

/// Score imputations of `data` against the ground truth of its hidden cells.
/// Metrics that do not apply or are undefined for the mask are `None`.
pub fn evaluate(data: &IncompleteDataset, imputed: &Array2<f64>, threshold: Option<f64>) -> MetricsReport {
    let layout = data.layout();
    let reveal = data.reveal();
    let mut report = MetricsReport::default();

    let mut truth_raw = Vec::new();
    let mut imputed_raw = Vec::new();
    let mut truth_std = Vec::new();
    let mut imputed_std = Vec::new();
    for r in 0..data.n_rows() {
        for &c in layout.features() {
            if let (true, Some(t)) = (reveal.is_masked(r, c), reveal.truth(r, c)) {
                truth_std.push(t);
                imputed_std.push(imputed[[r, c]]);
                truth_raw.push(reveal.destandardize(c, t));
                imputed_raw.push(reveal.destandardize(c, imputed[[r, c]]));
            }
        }
    }
    report.rmse = metrics::rmse(&truth_raw, &imputed_raw).ok();
    report.rmse_standardized = metrics::rmse(&truth_std, &imputed_std).ok();

    let targets = label_targets(data);
    if !targets.free.is_empty() {
        let scores: Vec<f64> = targets.free.iter().map(|&(r, c)| imputed[[r, c]]).collect();
        let truth: Vec<bool> = targets
            .free
            .iter()
            .map(|&(r, c)| reveal.truth(r, c) == Some(1.0))
            .collect();
        report.micro_auc = metrics::micro_auc(&scores, &truth).ok();
        if let Some(t) = threshold {
            let predicted = meanfield::decode_multilabel(&scores, t);
            report.hamming_accuracy = metrics::hamming_accuracy(&predicted, &truth).ok();
        }
    }
    let mut aucs = Vec::new();
    let mut accs = Vec::new();
    for (g, group) in layout.class_groups().iter().enumerate() {
        let rows: Vec<&(usize, usize, usize)> = targets.groups.iter().filter(|t| t.1 == g).collect();
        let scores: Vec<Vec<f64>> = rows
            .iter()
            .map(|&&(r, _, _)| group.iter().map(|&c| imputed[[r, c]]).collect())
            .collect();
        let truth: Vec<usize> = rows.iter().map(|t| t.2).collect();
        let predicted: Vec<usize> = scores.iter().map(|s| decode_multiclass(s)).collect();
        aucs.extend(metrics::averaged_auc(&scores, &truth).ok());
        accs.extend(metrics::accuracy_multiclass(&predicted, &truth).ok());
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    report.averaged_auc = mean(&aucs);
    report.accuracy = mean(&accs);
    report
}

/// Outcome of one repeat.
#[derive(Debug)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub report: Result<MetricsReport>,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub threshold: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug)]
pub struct CellResult {
    pub q_fea: f64,
    pub q_label: f64,
    pub repeats: Vec<RepeatResult>,
}

impl CellResult {
    pub fn grid_row(&self) -> GridRow {
        let ok: Vec<MetricsReport> = self
            .repeats
            .iter()
            .filter_map(|r| r.report.as_ref().ok().copied())
            .collect();
        GridRow {
            q_fea: self.q_fea,
            q_label: self.q_label,
            report: aggregate(&ok),
            n_failed: self.repeats.len() - ok.len(),
        }
    }

    fn tag(&self) -> String {
        cell_tag(self.q_fea, self.q_label)
    }
}

fn cell_tag(q_fea: f64, q_label: f64) -> String {
    format!("qf{q_fea:.2}_ql{q_label:.2}")
}

/// Artifacts of one repeat, written when an output directory is set.
struct RepeatArtifacts<'a> {
    dir: Option<PathBuf>,
    masks: Vec<(&'a str, &'a IncompleteDataset)>,
}

fn write_artifacts(art: &RepeatArtifacts<'_>, outcome: &TrainOutcome) -> Result<()> {
    let Some(dir) = &art.dir else { return Ok(()) };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (name, ds) in &art.masks {
        ds.write_mask_csv(&dir.join(format!("{name}.csv")))?;
    }
    let log = dir.join("training_log.csv");
    fs::write(&log, outcome.log.to_csv()).map_err(|e| Error::io(log.display().to_string(), e))?;
    outcome.model.save(&dir.join("model.rbm"))
}

fn threshold_for(model: &RbmModel, train: &IncompleteDataset, cfg: &ImputationConfig) -> Result<Option<f64>> {
    if train.layout().free_labels().is_empty() {
        return Ok(None);
    }
    meanfield::learn_threshold_on(model, train, cfg).map(Some)
}

fn train_with_stopper(data: &IncompleteDataset, cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    let train_cfg = TrainConfig {
        seed: seed::derive(seed, &[tag::TRAIN]),
        ..cfg.train.clone()
    };
    let stop_cfg = ImputationConfig {
        seed: seed::derive(seed, &[tag::STOPPER]),
        n_restarts: cfg.stop_restarts.unwrap_or(cfg.imputation.n_restarts),
        ..cfg.imputation
    };
    let mut stopper = HiddenLabelAuc::new(data, cfg.stop_rows, stop_cfg, seed);
    train::train(data.view(), &train_cfg, &mut stopper)
}

/// One transductive repeat on an unmasked dataset.
fn transductive_repeat(
    full: &IncompleteDataset,
    cfg: &ExperimentConfig,
    q_fea: f64,
    q_label: f64,
    repeat: usize,
    dir: Option<PathBuf>,
) -> (RepeatResult, Option<TrainOutcome>) {
    let started = Instant::now();
    let seed = repeat_seed(cfg.base_seed, q_fea, q_label, repeat);
    let mut result = RepeatResult {
        repeat,
        seed,
        report: Ok(MetricsReport::default()),
        best_epoch: None,
        epochs_run: 0,
        threshold: None,
        wall_time_s: 0.0,
    };
    let run = |result: &mut RepeatResult| -> Result<(MetricsReport, TrainOutcome)> {
        let spec = MaskSpec::new(q_fea, q_label, seed::derive(seed, &[tag::MASK]))?;
        let masked = apply_mask(full, &spec);
        let outcome = train_with_stopper(&masked, cfg, seed)?;
        result.best_epoch = outcome.best_epoch;
        result.epochs_run = outcome.epochs_run;
        let imp_cfg = ImputationConfig {
            seed: seed::derive(seed, &[tag::IMPUTE]),
            ..cfg.imputation
        };
        let threshold = threshold_for(&outcome.model, &masked, &imp_cfg)?;
        result.threshold = threshold;
        let imputed = meanfield::impute_all(&outcome.model, &masked.view(), &imp_cfg)?;
        let report = evaluate(&masked, &imputed, threshold);
        write_artifacts(&RepeatArtifacts { dir, masks: vec![("mask", &masked)] }, &outcome)?;
        Ok((report, outcome))
    };
    let out = run(&mut result);
    result.wall_time_s = started.elapsed().as_secs_f64();
    match out {
        Ok((report, outcome)) => {
            result.report = Ok(report);
            (result, Some(outcome))
        }
        Err(e) => {
            result.report = Err(e);
            (result, None)
        }
    }
}

/// One inductive repeat: split, train on the masked training part, predict
/// the fully hidden labels of the test part.
fn inductive_repeat(
    full: &IncompleteDataset,
    cfg: &ExperimentConfig,
    q_fea: f64,
    q_label: f64,
    repeat: usize,
    dir: Option<PathBuf>,
) -> (RepeatResult, Option<TrainOutcome>) {
    let started = Instant::now();
    let seed = repeat_seed(cfg.base_seed, q_fea, q_label, repeat);
    let mut result = RepeatResult {
        repeat,
        seed,
        report: Ok(MetricsReport::default()),
        best_epoch: None,
        epochs_run: 0,
        threshold: None,
        wall_time_s: 0.0,
    };
    let run = |result: &mut RepeatResult| -> Result<(MetricsReport, TrainOutcome)> {
        let (train_part, test_part) = split_inductive(full, cfg.train_fraction, seed::derive(seed, &[tag::SPLIT]))?;
        let train_masked = apply_mask(&train_part, &MaskSpec::new(q_fea, q_label, seed::derive(seed, &[tag::MASK, 0]))?);
        let test_masked = apply_mask(&test_part, &MaskSpec::new(q_fea, 1.0, seed::derive(seed, &[tag::MASK, 1]))?);
        let outcome = train_with_stopper(&train_masked, cfg, seed)?;
        result.best_epoch = outcome.best_epoch;
        result.epochs_run = outcome.epochs_run;
        let imp_cfg = ImputationConfig {
            seed: seed::derive(seed, &[tag::IMPUTE]),
            ..cfg.imputation
        };
        let threshold = threshold_for(&outcome.model, &train_masked, &imp_cfg)?;
        result.threshold = threshold;
        let imputed = meanfield::impute_all(&outcome.model, &test_masked.view(), &imp_cfg)?;
        let mut report = evaluate(&test_masked, &imputed, threshold);
        report.rmse = None;
        report.rmse_standardized = None;
        write_artifacts(
            &RepeatArtifacts {
                dir,
                masks: vec![("train_mask", &train_masked), ("test_mask", &test_masked)],
            },
            &outcome,
        )?;
        Ok((report, outcome))
    };
    let out = run(&mut result);
    result.wall_time_s = started.elapsed().as_secs_f64();
    match out {
        Ok((report, outcome)) => {
            result.report = Ok(report);
            (result, Some(outcome))
        }
        Err(e) => {
            result.report = Err(e);
            (result, None)
        }
    }
}

/// Run every (q_fea, q_label) cell of the grid. Failures are recorded per
/// repeat and the grid continues.
pub fn run_grid(cfg: &ExperimentConfig, data: &IncompleteDataset) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let mut cells = Vec::new();
    for &q_fea in &cfg.q_fea {
        for &q_label in &cfg.q_label {
            let mut repeats = Vec::new();
            for r in 0..cfg.n_repeats {
                let dir = cfg
                    .out_dir
                    .as_ref()
                    .map(|d| d.join("runs").join(cell_tag(q_fea, q_label)).join(format!("r{r}")));
                let (res, _) = match cfg.mode {
                    Mode::Transductive => transductive_repeat(data, cfg, q_fea, q_label, r, dir),
                    Mode::Inductive => inductive_repeat(data, cfg, q_fea, q_label, r, dir),
                };
                match &res.report {
                    Ok(rep) => log::info!(
                        "{} repeat {r}: {:?} ({} epochs, {:.1}s)",
                        cell_tag(q_fea, q_label),
                        rep,
                        res.epochs_run,
                        res.wall_time_s
                    ),
                    Err(e) => log::warn!("{} repeat {r} failed: {e}", cell_tag(q_fea, q_label)),
                }
                repeats.push(res);
            }
            cells.push(CellResult { q_fea, q_label, repeats });
        }
    }
    Ok(cells)
}

pub fn run_transductive(cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    let cfg = ExperimentConfig { mode: Mode::Transductive, ..cfg.clone() };
    cfg.validate()?;
    run_grid(&cfg, &cfg.load_dataset()?)
}

pub fn run_inductive(cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    let cfg = ExperimentConfig { mode: Mode::Inductive, ..cfg.clone() };
    cfg.validate()?;
    run_grid(&cfg, &cfg.load_dataset()?)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-repeat CSV of one cell.
pub fn cell_csv(cell: &CellResult) -> String {
    let mut s = String::from("repeat,seed,status");
    for name in MetricsReport::NAMES {
        s.push(',');
        s.push_str(name);
    }
    s.push_str(",threshold,best_epoch,epochs_run,wall_time_s\n");
    for r in &cell.repeats {
        let (status, values) = match &r.report {
            Ok(rep) => ("ok".to_string(), rep.values()),
            Err(e) => (format!("\"failed: {}\"", e.to_string().replace('"', "'")), [None; 6]),
        };
        s.push_str(&format!("{},{},{}", r.repeat, r.seed, status));
        for v in values {
            s.push(',');
            s.push_str(&fmt_opt(v));
        }
        s.push_str(&format!(
            ",{},{},{},{:.3}\n",
            fmt_opt(r.threshold),
            r.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            r.epochs_run,
            r.wall_time_s
        ));
    }
    s
}

/// Write `aggregate.csv`, `aggregate.md` and one CSV per cell.
pub fn emit_report(out_dir: &Path, cells: &[CellResult]) -> Result<()> {
    let cells_dir = out_dir.join("cells");
    fs::create_dir_all(&cells_dir).map_err(|e| Error::io(cells_dir.display().to_string(), e))?;
    let write = |p: PathBuf, text: String| fs::write(&p, text).map_err(|e| Error::io(p.display().to_string(), e));
    for cell in cells {
        write(cells_dir.join(format!("{}.csv", cell.tag())), cell_csv(cell))?;
    }
    let rows: Vec<GridRow> = cells.iter().map(CellResult::grid_row).collect();
    write(out_dir.join("aggregate.csv"), metrics::grid_csv(&rows))?;
    write(out_dir.join("aggregate.md"), metrics::grid_table(&rows))
}
