//! Lossy-CDk: minibatch gradient ascent on the marginal likelihood of the
//! observed entries. Observed visible units are pinned (they act as a shift of
//! the hidden biases) and only the missing ones are Gibbs-sampled in the
//! positive phase. The negative phase is plain CD-k from a random start, or
//! PCD with persistent chains.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{MaskedRow, ObservedView};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{bernoulli, sigmoid, Gradient, RbmModel, VisibleUnit};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativePhase {
    /// k Gibbs steps from a fresh random visible configuration.
    Cd,
    /// k Gibbs steps continuing persistent chains.
    Pcd,
}

impl std::str::FromStr for NegativePhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cd" => Ok(NegativePhase::Cd),
            "pcd" => Ok(NegativePhase::Pcd),
            other => Err(Error::Config(format!("unknown negative phase '{other}' (cd|pcd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub k_gibbs: usize,
    pub n_hidden: usize,
    pub negative_phase: NegativePhase,
    /// PCD only. `None` means one chain per minibatch row.
    pub n_persistent_chains: Option<usize>,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    /// Epochs between evaluations of the stopping metric.
    pub eval_every: usize,
    pub seed: u64,
    /// Standard deviation of the initial weights.
    pub weight_std: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            minibatch_size: 10,
            k_gibbs: 1,
            n_hidden: 100,
            negative_phase: NegativePhase::Cd,
            n_persistent_chains: None,
            max_epochs: 1000,
            patience_epochs: 500,
            eval_every: 10,
            seed: 0,
            weight_std: 0.01,
            momentum: 0.0,
            weight_decay: 0.0,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.k_gibbs == 0 {
            return fail("k_gibbs must be at least 1".into());
        }
        if self.minibatch_size == 0 {
            return fail("minibatch size must be at least 1".into());
        }
        if self.n_hidden == 0 {
            return fail("n_hidden must be at least 1".into());
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1".into());
        }
        if self.n_persistent_chains == Some(0) {
            return fail("n_persistent_chains must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return fail("momentum must lie in [0, 1) and weight decay be non-negative".into());
        }
        Ok(())
    }

    fn n_chains(&self) -> usize {
        match self.negative_phase {
            NegativePhase::Cd => self.minibatch_size,
            NegativePhase::Pcd => self.n_persistent_chains.unwrap_or(self.minibatch_size),
        }
    }
}

/// Joint visible/hidden state of one Gibbs chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsChain {
    pub v: Vec<f64>,
    pub h: Vec<f64>,
}

impl GibbsChain {
    /// Uniform random binary / standard normal visible units, zero hidden.
    pub fn random<R: Rng + ?Sized>(model: &RbmModel, rng: &mut R) -> Self {
        GibbsChain {
            v: model.units().iter().map(|u| u.sample_initial(rng)).collect(),
            h: vec![0.0; model.n_hidden()],
        }
    }
}

/// Chains carried across minibatches by PCD.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistentChains {
    pub chains: Vec<GibbsChain>,
}

impl PersistentChains {
    pub fn random(model: &RbmModel, n: usize, seed: u64) -> Self {
        PersistentChains {
            chains: (0..n)
                .map(|c| GibbsChain::random(model, &mut seed::rng(seed, &[tag::PERSISTENT_INIT, c as u64])))
                .collect(),
        }
    }
}

/// Effective hidden bias `b_j + sum_{i in O} w_ij v_i` of a partially
/// observed row.
pub fn pinned_hidden_bias(model: &RbmModel, row: MaskedRow<'_>) -> Result<Array1<f64>> {
    if row.len() != model.n_visible() {
        return Err(Error::Shape(format!(
            "row has {} entries, model has {} visible units",
            row.len(),
            model.n_visible()
        )));
    }
    let mut out = vec![0.0; model.n_hidden()];
    pinned_input_into(model, row, &mut out);
    Ok(Array1::from(out))
}

fn pinned_input_into(model: &RbmModel, row: MaskedRow<'_>, out: &mut [f64]) {
    out.copy_from_slice(model.hidden_bias().as_slice().expect("contiguous"));
    for i in 0..row.len() {
        if let Some(x) = row.get(i) {
            add_row(model, i, x, out);
        }
    }
}

#[inline]
fn add_row(model: &RbmModel, i: usize, x: f64, out: &mut [f64]) {
    if x == 0.0 {
        return;
    }
    let nh = model.n_hidden();
    let w = &model.weights().as_slice().expect("row-major")[i * nh..(i + 1) * nh];
    for (o, &wij) in out.iter_mut().zip(w) {
        *o += x * wij;
    }
}

#[inline]
fn sample_unit<R: Rng + ?Sized>(unit: VisibleUnit, model: &RbmModel, i: usize, h: &[f64], rng: &mut R) -> f64 {
    unit.sample(model.visible_input(i, h), rng)
}

/// Final visible state and hidden activations `q` of one sample's chain;
/// the sufficient statistics are `v q^T`, `v`, `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
}

/// Positive-phase chain for one row: observed units pinned, missing units
/// initialized at random and resampled for `k` steps. For observed `i` the
/// statistic `v_i q_j` is the exact expectation over `h_j`; for missing `i`
/// it is a one-sample Monte Carlo estimate.
pub fn positive_chain<R: Rng + ?Sized>(model: &RbmModel, row: MaskedRow<'_>, k: usize, rng: &mut R) -> ChainStats {
    let nh = model.n_hidden();
    let units = model.units();
    let mut pinned = vec![0.0; nh];
    pinned_input_into(model, row, &mut pinned);
    let missing: Vec<usize> = (0..row.len()).filter(|&i| !row.is_observed(i)).collect();
    let mut v: Vec<f64> = (0..row.len()).map(|i| row.get(i).unwrap_or(0.0)).collect();
    if missing.is_empty() {
        return ChainStats {
            v,
            q: pinned.into_iter().map(sigmoid).collect(),
        };
    }
    for &i in &missing {
        v[i] = units[i].sample_initial(rng);
    }
    let mut input = vec![0.0; nh];
    let mut h = vec![0.0; nh];
    let fill_input = |v: &[f64], input: &mut [f64]| {
        input.copy_from_slice(&pinned);
        for &i in &missing {
            add_row(model, i, v[i], input);
        }
    };
    for _ in 0..k {
        fill_input(&v, &mut input);
        for (hj, &x) in h.iter_mut().zip(&input) {
            *hj = bernoulli(sigmoid(x), rng);
        }
        for &i in &missing {
            v[i] = sample_unit(units[i], model, i, &h, rng);
        }
    }
    fill_input(&v, &mut input);
    ChainStats {
        v,
        q: input.into_iter().map(sigmoid).collect(),
    }
}

/// Positive term `<v_i h_j>`, `<v_i>`, `<h_j>` for one partially observed row.
pub fn positive_term<R: Rng + ?Sized>(model: &RbmModel, row: MaskedRow<'_>, k: usize, rng: &mut R) -> Result<Gradient> {
    if k == 0 {
        return Err(Error::Config("k_gibbs must be at least 1".into()));
    }
    if row.len() != model.n_visible() {
        return Err(Error::Shape(format!(
            "row has {} entries, model has {} visible units",
            row.len(),
            model.n_visible()
        )));
    }
    let s = positive_chain(model, row, k, rng);
    let mut g = Gradient::like(model);
    g.add_outer(&s.v, &s.q, 1.0);
    Ok(g)
}

/// Run `k` full Gibbs steps in place and return the Rao-Blackwellized
/// statistics of the final visible state.
pub fn advance_chain<R: Rng + ?Sized>(model: &RbmModel, chain: &mut GibbsChain, k: usize, rng: &mut R) -> ChainStats {
    let nh = model.n_hidden();
    let mut input = vec![0.0; nh];
    for _ in 0..k {
        model.hidden_input_into(&chain.v, &mut input);
        for (hj, &x) in chain.h.iter_mut().zip(&input) {
            *hj = bernoulli(sigmoid(x), rng);
        }
        for (i, unit) in model.units().iter().enumerate() {
            chain.v[i] = sample_unit(*unit, model, i, &chain.h, rng);
        }
    }
    model.hidden_input_into(&chain.v, &mut input);
    ChainStats {
        v: chain.v.clone(),
        q: input.into_iter().map(sigmoid).collect(),
    }
}

/// CD-k negative statistics from one chain started at `init` (or at a
/// random configuration when `None`).
pub fn negative_term_cd<R: Rng + ?Sized>(
    model: &RbmModel,
    k: usize,
    rng: &mut R,
    init: Option<&[f64]>,
) -> Result<Gradient> {
    if k == 0 {
        return Err(Error::Config("k_gibbs must be at least 1".into()));
    }
    let mut chain = match init {
        Some(v) if v.len() != model.n_visible() => {
            return Err(Error::Shape(format!("init has {} entries", v.len())))
        }
        Some(v) => GibbsChain {
            v: v.to_vec(),
            h: vec![0.0; model.n_hidden()],
        },
        None => GibbsChain::random(model, rng),
    };
    let s = advance_chain(model, &mut chain, k, rng);
    let mut g = Gradient::like(model);
    g.add_outer(&s.v, &s.q, 1.0);
    Ok(g)
}

/// Advance every persistent chain `k` steps and return the averaged
/// statistics. Chain `c` draws from the stream keyed by `(seed, c)`.
pub fn negative_term_pcd(
    chains: &mut PersistentChains,
    model: &RbmModel,
    k: usize,
    seed: u64,
    exec: Exec,
) -> Result<Gradient> {
    if k == 0 {
        return Err(Error::Config("k_gibbs must be at least 1".into()));
    }
    if chains.chains.is_empty() {
        return Err(Error::Config("no persistent chains".into()));
    }
    let current = &chains.chains;
    let advanced: Vec<(GibbsChain, ChainStats)> = exec.map(current.len(), |c| {
        let mut chain = current[c].clone();
        let stats = advance_chain(model, &mut chain, k, &mut seed::rng(seed, &[c as u64]));
        (chain, stats)
    });
    let mut g = Gradient::like(model);
    let scale = 1.0 / advanced.len() as f64;
    for (_, s) in &advanced {
        g.add_outer(&s.v, &s.q, scale);
    }
    chains.chains = advanced.into_iter().map(|(c, _)| c).collect();
    Ok(g)
}

/// Key of one minibatch inside a training run; all random streams of the
/// minibatch are derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchKey {
    pub seed: u64,
    pub epoch: u64,
    pub batch: u64,
}

impl BatchKey {
    fn positive(&self, s: usize) -> seed::Rng {
        seed::rng(self.seed, &[tag::POSITIVE, self.epoch, self.batch, s as u64])
    }

    fn negative_seed(&self) -> u64 {
        seed::derive(self.seed, &[tag::NEGATIVE, self.epoch, self.batch])
    }
}

fn negative_phase(
    model: &RbmModel,
    config: &TrainConfig,
    key: BatchKey,
    chains: Option<&mut PersistentChains>,
) -> Result<Gradient> {
    let neg_seed = key.negative_seed();
    match (config.negative_phase, chains) {
        (NegativePhase::Pcd, Some(chains)) => {
            negative_term_pcd(chains, model, config.k_gibbs, neg_seed, config.exec)
        }
        (NegativePhase::Pcd, None) => Err(Error::Config("PCD requires persistent chains".into())),
        (NegativePhase::Cd, _) => {
            let n = config.n_chains();
            let stats = config.exec.map(n, |c| {
                let mut rng = seed::rng(neg_seed, &[c as u64]);
                let mut chain = GibbsChain::random(model, &mut rng);
                advance_chain(model, &mut chain, config.k_gibbs, &mut rng)
            });
            let mut g = Gradient::like(model);
            for s in &stats {
                g.add_outer(&s.v, &s.q, 1.0 / n as f64);
            }
            Ok(g)
        }
    }
}

/// Lossy-CDk gradient estimate for one minibatch: averaged pinned positive
/// terms minus one negative estimate.
pub fn lossy_minibatch_gradient(
    model: &RbmModel,
    rows: &[MaskedRow<'_>],
    config: &TrainConfig,
    key: BatchKey,
    chains: Option<&mut PersistentChains>,
) -> Result<Gradient> {
    let stats = config
        .exec
        .map(rows.len(), |s| positive_chain(model, rows[s], config.k_gibbs, &mut key.positive(s)));
    let mut g = Gradient::like(model);
    let scale = 1.0 / rows.len() as f64;
    for s in &stats {
        g.add_outer(&s.v, &s.q, scale);
    }
    let neg = negative_phase(model, config, key, chains)?;
    g.add_scaled(&neg, -1.0);
    Ok(g)
}

/// Standard CD-k gradient for complete rows: positive term
/// `v sigmoid(W^T v + b)^T`, same negative phase as the lossy estimator.
pub fn vanilla_cd_gradient(
    model: &RbmModel,
    rows: &[&[f64]],
    config: &TrainConfig,
    key: BatchKey,
    chains: Option<&mut PersistentChains>,
) -> Result<Gradient> {
    let mut g = Gradient::like(model);
    let scale = 1.0 / rows.len() as f64;
    let mut input = vec![0.0; model.n_hidden()];
    for v in rows {
        model.hidden_input_into(v, &mut input);
        let q: Vec<f64> = input.iter().map(|&x| sigmoid(x)).collect();
        g.add_outer(v, &q, scale);
    }
    let neg = negative_phase(model, config, key, chains)?;
    g.add_scaled(&neg, -1.0);
    Ok(g)
}

/// Gradient-ascent update with the optional momentum / weight-decay knobs.
#[derive(Debug, Clone)]
pub struct Updater {
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: Option<Gradient>,
}

impl Updater {
    pub fn new(config: &TrainConfig) -> Self {
        Updater {
            learning_rate: config.learning_rate,
            momentum: config.momentum,
            weight_decay: config.weight_decay,
            velocity: None,
        }
    }

    pub fn apply(&mut self, model: &mut RbmModel, grad: &Gradient) -> Result<()> {
        if self.momentum == 0.0 && self.weight_decay == 0.0 {
            grad.apply_to(model, self.learning_rate);
        } else {
            let mut step = grad.clone();
            step.weights.scaled_add(-self.weight_decay, model.weights());
            let velocity = self.velocity.get_or_insert_with(|| Gradient::like(model));
            velocity.scale(self.momentum);
            velocity.add_scaled(&step, self.learning_rate);
            velocity.apply_to(model, 1.0);
        }
        model.check_finite()
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub metric: Option<f64>,
    pub parameter_norm: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub const HEADER: &'static str = "epoch,metric,parameter_norm,wall_time_s";

    pub fn record_line(r: &LogRecord) -> String {
        format!(
            "{},{},{},{:.3}",
            r.epoch,
            r.metric.map(|m| m.to_string()).unwrap_or_default(),
            r.parameter_norm,
            r.wall_time_s
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&Self::record_line(r));
            s.push('\n');
        }
        s
    }

    /// Append the records to a CSV file, writing the header if the file is new.
    pub fn append_csv(&self, path: &Path) -> Result<()> {
        let fresh = !path.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut text = String::new();
        if fresh {
            text.push_str(Self::HEADER);
            text.push('\n');
        }
        for r in &self.records {
            text.push_str(&Self::record_line(r));
            text.push('\n');
        }
        f.write_all(text.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best stopping metric, or the final parameters when
    /// the metric was never defined.
    pub model: RbmModel,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub epochs_run: usize,
    pub log: TrainingLog,
}

/// Stopping metric: higher is better, `None` when undefined.
pub trait StoppingMetric {
    fn evaluate(&mut self, model: &RbmModel, epoch: usize) -> Result<Option<f64>>;
}

impl<F> StoppingMetric for F
where
    F: FnMut(&RbmModel, usize) -> Result<Option<f64>>,
{
    fn evaluate(&mut self, model: &RbmModel, epoch: usize) -> Result<Option<f64>> {
        self(model, epoch)
    }
}

/// Never defined: training runs for `max_epochs` and returns the last model.
pub struct NoStopping;

impl StoppingMetric for NoStopping {
    fn evaluate(&mut self, _: &RbmModel, _: usize) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// Initial model for a dataset: `N(0, weight_std^2)` weights, zero biases.
pub fn initial_model(view: &ObservedView<'_>, config: &TrainConfig) -> Result<RbmModel> {
    RbmModel::random_init(
        view.units().to_vec(),
        view.layout().clone(),
        config.n_hidden,
        config.weight_std,
        &mut seed::rng(config.seed, &[tag::INIT]),
    )
}

/// Train from a random start. See [`train_from`].
pub fn train(view: ObservedView<'_>, config: &TrainConfig, stopper: &mut dyn StoppingMetric) -> Result<TrainOutcome> {
    let model = initial_model(&view, config)?;
    train_from(view, model, config, stopper)
}

/// Lossy-CDk training loop. Each epoch shuffles the rows into minibatches
/// and applies one update per minibatch. Every `eval_every` epochs the
/// stopping metric is evaluated; training halts once it has not improved for
/// `patience_epochs`, and the best snapshot is returned.
pub fn train_from(
    view: ObservedView<'_>,
    mut model: RbmModel,
    config: &TrainConfig,
    stopper: &mut dyn StoppingMetric,
) -> Result<TrainOutcome> {
    config.validate()?;
    if view.n_rows() == 0 {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if view.n_visible() != model.n_visible() || view.layout() != model.layout() {
        return Err(Error::Shape("dataset layout does not match the model".into()));
    }
    let started = Instant::now();
    let mut chains = (config.negative_phase == NegativePhase::Pcd)
        .then(|| PersistentChains::random(&model, config.n_chains(), config.seed));
    let mut updater = Updater::new(config);
    let mut log = TrainingLog::default();
    let mut best: Option<(usize, f64, RbmModel)> = None;
    let mut order: Vec<usize> = (0..view.n_rows()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut seed::rng(config.seed, &[tag::SHUFFLE, epoch as u64]));
        for (b, batch) in order.chunks(config.minibatch_size).enumerate() {
            let rows: Vec<MaskedRow<'_>> = batch.iter().map(|&r| view.row(r)).collect();
            let key = BatchKey {
                seed: config.seed,
                epoch: epoch as u64,
                batch: b as u64,
            };
            let grad = lossy_minibatch_gradient(&model, &rows, config, key, chains.as_mut())?;
            updater.apply(&mut model, &grad).map_err(|e| {
                Error::NonFinite(format!(
                    "epoch {epoch}, minibatch {b}: {e}; the learning rate {} is likely too large",
                    config.learning_rate
                ))
            })?;
        }
        epochs_run = epoch;
        if epoch % config.eval_every != 0 && epoch != config.max_epochs {
            continue;
        }
        let metric = stopper.evaluate(&model, epoch)?;
        log.records.push(LogRecord {
            epoch,
            metric,
            parameter_norm: model.parameter_norm(),
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: metric {metric:?}");
        if let Some(m) = metric {
            if best.as_ref().is_none_or(|(_, b, _)| m > *b) {
                best = Some((epoch, m, model.clone()));
            }
        }
        if let Some((best_epoch, _, _)) = &best {
            if epoch - best_epoch >= config.patience_epochs {
                break;
            }
        }
    }
    Ok(match best {
        Some((epoch, metric, snapshot)) => TrainOutcome {
            model: snapshot,
            best_epoch: Some(epoch),
            best_metric: Some(metric),
            epochs_run,
            log,
        },
        None => TrainOutcome {
            model,
            best_epoch: None,
            best_metric: None,
            epochs_run,
            log,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VisibleLayout;
    use ndarray::{array, Array2};
    use rand::SeedableRng;

    fn rng(s: u64) -> seed::Rng {
        seed::Rng::seed_from_u64(s)
    }

    fn zero_model(nv: usize, nh: usize) -> RbmModel {
        RbmModel::binary(Array2::zeros((nv, nh)), Array1::zeros(nv), Array1::zeros(nh)).unwrap()
    }

    #[test]
    fn pinned_bias_cases() {
        let m = RbmModel::binary(array![[2.0], [0.5]], array![0.0, 0.0], array![-1.0]).unwrap();
        let none = MaskedRow::new(&[0.0, 0.0], &[false, false]).unwrap();
        assert_eq!(pinned_hidden_bias(&m, none).unwrap(), array![-1.0]);
        let one = MaskedRow::new(&[1.0, 0.0], &[true, false]).unwrap();
        assert_eq!(pinned_hidden_bias(&m, one).unwrap(), array![1.0]);
        let all = MaskedRow::new(&[1.0, 1.0], &[true, true]).unwrap();
        assert_eq!(pinned_hidden_bias(&m, all).unwrap(), array![1.5]);
        let short = MaskedRow::new(&[1.0], &[true]).unwrap();
        assert!(pinned_hidden_bias(&m, short).is_err());
    }

    #[test]
    fn complete_row_positive_term_is_closed_form() {
        let m = RbmModel::binary(array![[0.3, -0.7], [1.1, 0.2]], array![0.1, 0.0], array![0.4, -0.2]).unwrap();
        let v = [1.0, 1.0];
        let row = MaskedRow::new(&v, &[true, true]).unwrap();
        let g = positive_term(&m, row, 1, &mut rng(0)).unwrap();
        let q = m.hidden_conditional(array![1.0, 1.0].view()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g.weights[[i, j]], v[i] * q[j]);
            }
        }
    }

    #[test]
    fn strongly_biased_missing_unit_turns_on() {
        let mut m = zero_model(2, 3);
        m.visible_bias_mut()[1] = 10.0;
        let row = MaskedRow::new(&[1.0, 0.0], &[true, false]).unwrap();
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|s| positive_chain(&m, row, 1, &mut rng(s)).v[1])
            .sum::<f64>()
            / n as f64;
        assert!(mean >= 0.9999, "{mean}");
    }

    #[test]
    fn observed_units_stay_pinned() {
        let mut r = rng(4);
        let m = RbmModel::random_init(
            vec![VisibleUnit::Binary; 5],
            VisibleLayout::features_only(5),
            3,
            2.0,
            &mut r,
        )
        .unwrap();
        let values = [1.0, 0.0, 1.0, 0.0, 1.0];
        let mask = [true, false, true, false, false];
        let row = MaskedRow::new(&values, &mask).unwrap();
        for s in 0..200 {
            let st = positive_chain(&m, row, 7, &mut rng(s));
            assert_eq!(st.v[0], 1.0);
            assert_eq!(st.v[2], 1.0);
        }
    }

    #[test]
    fn zero_model_negative_statistic_is_quarter() {
        let m = zero_model(2, 2);
        let n = 40_000;
        let mut acc = 0.0;
        for s in 0..n {
            acc += negative_term_cd(&m, 1, &mut rng(s), None).unwrap().weights[[0, 1]];
        }
        let mean = acc / n as f64;
        assert!((mean - 0.25).abs() < 0.01, "{mean}");
    }

    #[test]
    fn saturated_negative_chain() {
        let mut m = zero_model(2, 2);
        m.visible_bias_mut().fill(20.0);
        m.hidden_bias_mut().fill(20.0);
        let g = negative_term_cd(&m, 1, &mut rng(1), None).unwrap();
        assert!(g.weights.iter().all(|&x| x > 1.0 - 1e-8));
    }

    #[test]
    fn zero_k_is_refused() {
        let m = zero_model(2, 2);
        let mut chains = PersistentChains::random(&m, 3, 0);
        let before = chains.clone();
        assert!(negative_term_pcd(&mut chains, &m, 0, 0, Exec::Sequential).is_err());
        assert_eq!(chains, before);
        assert!(negative_term_cd(&m, 0, &mut rng(0), None).is_err());
        let cfg = TrainConfig { k_gibbs: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pcd_zero_model_statistic_is_quarter() {
        let m = zero_model(2, 2);
        let mut chains = PersistentChains::random(&m, 100, 3);
        let mut acc = 0.0;
        let rounds = 200;
        for t in 0..rounds {
            acc += negative_term_pcd(&mut chains, &m, 1, t, Exec::Sequential).unwrap().weights[[1, 0]];
        }
        let mean = acc / rounds as f64;
        assert!((mean - 0.25).abs() < 0.01, "{mean}");
    }

    #[test]
    fn sequential_and_parallel_updates_agree() {
        let mut r = rng(8);
        let m = RbmModel::random_init(
            vec![VisibleUnit::Binary; 6],
            VisibleLayout::features_only(6),
            4,
            0.5,
            &mut r,
        )
        .unwrap();
        let values: Vec<f64> = (0..30).map(|k| (k % 3 == 0) as u8 as f64).collect();
        let mask: Vec<bool> = (0..30).map(|k| k % 4 != 1).collect();
        let rows: Vec<MaskedRow<'_>> = (0..5)
            .map(|s| MaskedRow::new(&values[s * 6..s * 6 + 6], &mask[s * 6..s * 6 + 6]).unwrap())
            .collect();
        let key = BatchKey { seed: 1, epoch: 2, batch: 3 };
        for phase in [NegativePhase::Cd, NegativePhase::Pcd] {
            let seq = TrainConfig { exec: Exec::Sequential, negative_phase: phase, n_hidden: 4, ..TrainConfig::default() };
            let par = TrainConfig { exec: Exec::Parallel, ..seq.clone() };
            let mut c1 = PersistentChains::random(&m, 5, 0);
            let mut c2 = c1.clone();
            let a = lossy_minibatch_gradient(&m, &rows, &seq, key, Some(&mut c1)).unwrap();
            let b = lossy_minibatch_gradient(&m, &rows, &par, key, Some(&mut c2)).unwrap();
            assert_eq!(a, b);
            assert_eq!(c1, c2);
        }
    }

    #[test]
    fn updater_knobs() {
        let mut m = zero_model(1, 1);
        let mut g = Gradient::like(&m);
        g.weights[[0, 0]] = 1.0;
        let cfg = TrainConfig { learning_rate: 0.5, momentum: 0.5, ..TrainConfig::default() };
        let mut u = Updater::new(&cfg);
        u.apply(&mut m, &g).unwrap();
        u.apply(&mut m, &g).unwrap();
        assert_eq!(m.weights()[[0, 0]], 0.5 + 0.75);
        g.weights[[0, 0]] = f64::INFINITY;
        assert!(matches!(u.apply(&mut m, &g), Err(Error::NonFinite(_))));
    }

    #[test]
    fn training_log_csv() {
        let log = TrainingLog {
            records: vec![LogRecord { epoch: 10, metric: Some(0.5), parameter_norm: 2.0, wall_time_s: 1.25 }],
        };
        assert_eq!(log.to_csv(), "epoch,metric,parameter_norm,wall_time_s\n10,0.5,2,1.250\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        log.append_csv(&p).unwrap();
        log.append_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
    }
}
