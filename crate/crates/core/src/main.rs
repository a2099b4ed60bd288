use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lossy_rbm::data::MaskSpec;
use lossy_rbm::experiment::{self, emit_report, CellResult, ExperimentConfig, Mode};
use lossy_rbm::meanfield::{self, ImputationConfig};
use lossy_rbm::metrics::{self, MetricsReport};
use lossy_rbm::seed::{self, tag};
use lossy_rbm::{Error, RbmModel, Result};

/// RBM training, imputation and evaluation on data with missing entries.
#[derive(Parser)]
#[command(name = "lossy-rbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mask the whole dataset, train on it and score the hidden cells.
    Transductive(CommonArgs),
    /// Train on a 70% split and predict the hidden labels of the rest.
    Inductive(CommonArgs),
    /// Mask a dataset with the first grid cell's rates and train one model.
    Train(CommonArgs),
    /// Impute the missing cells of a dataset with a trained model.
    Impute(ModelArgs),
    /// Score a trained model's imputations of the masked cells.
    Eval(ModelArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV file, or a directory holding an MNIST IDX pair.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated feature masking rates.
    #[arg(long)]
    q_fea: Option<String>,
    /// Comma-separated label masking rates.
    #[arg(long)]
    q_label: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Negative phase: cd or pcd.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Random subsample of N rows.
    #[arg(long)]
    limit: Option<usize>,
    /// Any other config key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: PathBuf,
    /// Replay a mask file (`row,column` pairs) instead of masking with the
    /// configured rates.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Use the dataset's own missing cells and mask nothing else.
    #[arg(long, conflicts_with = "mask")]
    no_mask: bool,
}

impl CommonArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.into(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("dataset", path(&self.dataset));
        push("schema", path(&self.schema));
        push("q_fea", self.q_fea.clone());
        push("q_label", self.q_label.clone());
        push("repeats", self.repeats.map(|x| x.to_string()));
        push("seed", self.seed.map(|x| x.to_string()));
        push("out", path(&self.out));
        push("mode", self.mode.clone());
        push("epochs", self.epochs.map(|x| x.to_string()));
        push("patience", self.patience.map(|x| x.to_string()));
        push("limit", self.limit.map(|x| x.to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            pairs.push((k.into(), v.into()));
        }
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn run_grid(args: &CommonArgs, mode: Mode) -> Result<()> {
    let mut cfg = args.resolve()?;
    cfg.mode = mode;
    cfg.out_dir = Some(out_dir(&cfg));
    cfg.validate()?;
    let dir = out_dir(&cfg);
    std::fs::write(dir_created(&dir)?.join("config.txt"), format!("{cfg:#?}\n"))
        .map_err(|e| Error::io(dir.display().to_string(), e))?;
    let data = cfg.load_dataset()?;
    log::info!("loaded {} rows x {} visible units", data.n_rows(), data.n_visible());
    let cells = experiment::run_grid(&cfg, &data)?;
    emit_report(&dir, &cells)?;
    let rows: Vec<_> = cells.iter().map(CellResult::grid_row).collect();
    print!("{}", metrics::grid_table(&rows));
    println!("reports written to {}", dir.display());
    let mut failures = cells.into_iter().flat_map(|c| c.repeats).filter_map(|r| r.report.err());
    match failures.next() {
        Some(e) if rows.iter().all(|r| r.report.n_repeats == 0) => Err(e),
        _ => Ok(()),
    }
}

fn dir_created(dir: &Path) -> Result<&Path> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn run_train(args: &CommonArgs) -> Result<()> {
    let cfg = args.resolve()?;
    cfg.validate()?;
    let dir = out_dir(&cfg);
    dir_created(&dir)?;
    let data = cfg.load_dataset()?;
    let spec = MaskSpec::new(cfg.q_fea[0], cfg.q_label[0], seed::derive(cfg.base_seed, &[tag::MASK]))?;
    let masked = lossy_rbm::data::apply_mask(&data, &spec);
    let train_cfg = lossy_rbm::train::TrainConfig {
        seed: seed::derive(cfg.base_seed, &[tag::TRAIN]),
        ..cfg.train.clone()
    };
    let stop_cfg = ImputationConfig {
        seed: seed::derive(cfg.base_seed, &[tag::STOPPER]),
        n_restarts: cfg.stop_restarts.unwrap_or(cfg.imputation.n_restarts),
        ..cfg.imputation
    };
    let mut stopper = experiment::HiddenLabelAuc::new(&masked, cfg.stop_rows, stop_cfg, cfg.base_seed);
    let outcome = lossy_rbm::train::train(masked.view(), &train_cfg, &mut stopper)?;
    masked.write_mask_csv(&dir.join("mask.csv"))?;
    outcome.log.append_csv(&dir.join("training_log.csv"))?;
    outcome.model.save(&dir.join("model.rbm"))?;
    println!(
        "trained {} epochs, best epoch {:?}, stopping metric {:?}; model in {}",
        outcome.epochs_run,
        outcome.best_epoch,
        outcome.best_metric,
        dir.join("model.rbm").display()
    );
    Ok(())
}

/// Dataset with the requested mask, plus the model and imputation settings.
fn prepare(args: &ModelArgs) -> Result<(ExperimentConfig, lossy_rbm::data::IncompleteDataset, RbmModel)> {
    let cfg = args.common.resolve()?;
    let model = RbmModel::load(&args.model)?;
    let data = cfg.load_dataset()?;
    let data = if let Some(p) = &args.mask {
        data.with_mask_cells(&lossy_rbm::data::IncompleteDataset::read_mask_csv(p)?)?
    } else if args.no_mask {
        data
    } else {
        let spec = MaskSpec::new(cfg.q_fea[0], cfg.q_label[0], seed::derive(cfg.base_seed, &[tag::MASK]))?;
        lossy_rbm::data::apply_mask(&data, &spec)
    };
    if data.layout() != model.layout() {
        return Err(Error::Config("model layout does not match the dataset".into()));
    }
    Ok((cfg, data, model))
}

fn imputations(cfg: &ExperimentConfig, data: &lossy_rbm::data::IncompleteDataset, model: &RbmModel) -> Result<(ndarray::Array2<f64>, Option<f64>)> {
    let imp = ImputationConfig {
        seed: seed::derive(cfg.base_seed, &[tag::IMPUTE]),
        ..cfg.imputation
    };
    let threshold = if data.layout().free_labels().is_empty() {
        None
    } else {
        Some(meanfield::learn_threshold_on(model, data, &imp)?)
    };
    Ok((meanfield::impute_all(model, &data.view(), &imp)?, threshold))
}

fn run_impute(args: &ModelArgs) -> Result<()> {
    let (cfg, data, model) = prepare(args)?;
    let (imputed, threshold) = imputations(&cfg, &data, &model)?;
    let path = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("imputations.csv"));
    meanfield::write_imputation_csv(&path, &data, &imputed, threshold.unwrap_or(0.5))?;
    println!("imputed {} rows into {}", data.n_rows(), path.display());
    Ok(())
}

fn run_eval(args: &ModelArgs) -> Result<()> {
    let (cfg, data, model) = prepare(args)?;
    let (imputed, threshold) = imputations(&cfg, &data, &model)?;
    let report = experiment::evaluate(&data, &imputed, threshold);
    let mut text = MetricsReport::NAMES.join(",");
    text.push('\n');
    let values: Vec<String> = report
        .values()
        .iter()
        .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
        .collect();
    text.push_str(&values.join(","));
    text.push('\n');
    print!("{text}");
    if let Some(p) = &cfg.out_dir {
        std::fs::write(p, &text).map_err(|e| Error::io(p.display().to_string(), e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Transductive(a) => run_grid(a, Mode::Transductive),
        Command::Inductive(a) => run_grid(a, Mode::Inductive),
        Command::Train(a) => run_train(a),
        Command::Impute(a) => run_impute(a),
        Command::Eval(a) => run_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
