//! Mean-field imputation of missing visible units.
//!
//! Observed units are pinned to their values. The remaining visible
//! expectations `m_i` (Gaussian features), `p_i` (binary features and labels)
//! and the hidden activations `q_j` are iterated to the lowest-order
//! mean-field fixed point
//!
//! ```text
//! q_j = sigmoid(b_j + sum_i w_ij m_i)
//! m_i = (a_i + sum_j w_ij q_j) * sigma_i^2     (Gaussian)
//! p_i = sigmoid(a_i + sum_j w_ij q_j)          (binary)
//! ```
//!
//! from several random starts, and the results are averaged.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{IncompleteDataset, MaskedRow, ObservedView};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::hamming_accuracy;
use crate::model::{sigmoid, RbmModel, VisibleUnit};
use crate::seed::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    /// Expectations of every visible unit; pinned entries hold observations.
    pub visible: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl MeanFieldState {
    /// Random start: uniform probabilities for binary units and hidden
    /// activations, `N(0, sigma^2)` for Gaussian units.
    pub fn random<R: Rng + ?Sized>(model: &RbmModel, row: MaskedRow<'_>, rng: &mut R) -> Self {
        let visible = model
            .units()
            .iter()
            .enumerate()
            .map(|(i, unit)| match (row.get(i), unit) {
                (Some(x), _) => x,
                (None, VisibleUnit::Binary) => rng.random::<f64>(),
                (None, VisibleUnit::Gaussian { variance }) => {
                    variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        let hidden = (0..model.n_hidden()).map(|_| rng.random::<f64>()).collect();
        MeanFieldState { visible, hidden }
    }

    fn check(&self, model: &RbmModel, row: MaskedRow<'_>) -> Result<()> {
        if self.visible.len() != model.n_visible()
            || self.hidden.len() != model.n_hidden()
            || row.len() != model.n_visible()
        {
            return Err(Error::Shape(format!(
                "state {}+{}, row {}, model {}+{}",
                self.visible.len(),
                self.hidden.len(),
                row.len(),
                model.n_visible(),
                model.n_hidden()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImputationConfig {
    pub n_restarts: usize,
    pub n_iterations: usize,
    /// Weight of the previous value in each update.
    pub damping: f64,
    /// Stop a restart early once an iteration changes no coordinate by more
    /// than this. `None` runs exactly `n_iterations`.
    pub tolerance: Option<f64>,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            n_restarts: 10,
            n_iterations: 10,
            damping: 0.0,
            tolerance: None,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_restarts == 0 || self.n_iterations == 0 {
            return Err(Error::Config("n_restarts and n_iterations must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping {} must lie in [0, 1)", self.damping)));
        }
        Ok(())
    }
}

/// One sweep: hidden activations from the current visible expectations, then
/// every unpinned visible unit from the fresh hidden activations. Returns the
/// largest coordinate change.
pub fn mean_field_step(model: &RbmModel, row: MaskedRow<'_>, state: &mut MeanFieldState, damping: f64) -> Result<f64> {
    state.check(model, row)?;
    let mut input = vec![0.0; model.n_hidden()];
    for i in 0..row.len() {
        if let Some(x) = row.get(i) {
            state.visible[i] = x;
        }
    }
    model.hidden_input_into(&state.visible, &mut input);
    let mut change: f64 = 0.0;
    for (q, &x) in state.hidden.iter_mut().zip(&input) {
        let new = (1.0 - damping) * sigmoid(x) + damping * *q;
        change = change.max((new - *q).abs());
        *q = new;
    }
    for (i, unit) in model.units().iter().enumerate() {
        if row.is_observed(i) {
            continue;
        }
        let target = unit.mean(model.visible_input(i, &state.hidden));
        let new = (1.0 - damping) * target + damping * state.visible[i];
        change = change.max((new - state.visible[i]).abs());
        state.visible[i] = new;
    }
    Ok(change)
}

/// Largest violation of the fixed-point equations.
pub fn residual(model: &RbmModel, row: MaskedRow<'_>, state: &MeanFieldState) -> f64 {
    let mut input = vec![0.0; model.n_hidden()];
    model.hidden_input_into(&state.visible, &mut input);
    let hidden = input
        .iter()
        .zip(&state.hidden)
        .map(|(&x, &q)| (sigmoid(x) - q).abs())
        .fold(0.0, f64::max);
    let visible = model
        .units()
        .iter()
        .enumerate()
        .filter(|(i, _)| !row.is_observed(*i))
        .map(|(i, u)| (u.mean(model.visible_input(i, &state.hidden)) - state.visible[i]).abs())
        .fold(0.0, f64::max);
    hidden.max(visible)
}

/// Restart-averaged expectations for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub visible: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Run `n_restarts` independent fixed-point iterations and average them.
/// Restart `n` draws its start from the stream `(rng seed, n)`.
pub fn impute<R: Rng + ?Sized>(model: &RbmModel, row: MaskedRow<'_>, config: &ImputationConfig, rng: &mut R) -> Result<Imputation> {
    let base = rng.random::<u64>();
    impute_keyed(model, row, config, base)
}

fn impute_keyed(model: &RbmModel, row: MaskedRow<'_>, config: &ImputationConfig, key: u64) -> Result<Imputation> {
    config.validate()?;
    let mut sum = MeanFieldState {
        visible: vec![0.0; model.n_visible()],
        hidden: vec![0.0; model.n_hidden()],
    };
    for n in 0..config.n_restarts {
        let mut state = MeanFieldState::random(model, row, &mut seed::rng(key, &[n as u64]));
        for _ in 0..config.n_iterations {
            let change = mean_field_step(model, row, &mut state, config.damping)?;
            if config.tolerance.is_some_and(|tol| change <= tol) {
                break;
            }
        }
        if let Some(i) = state.visible.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("mean-field state of visible unit {i} diverged")));
        }
        for (s, x) in sum.visible.iter_mut().zip(&state.visible) {
            *s += x;
        }
        for (s, x) in sum.hidden.iter_mut().zip(&state.hidden) {
            *s += x;
        }
    }
    let k = config.n_restarts as f64;
    Ok(Imputation {
        visible: sum
            .visible
            .into_iter()
            .enumerate()
            .map(|(i, x)| row.get(i).unwrap_or(x / k))
            .collect(),
        hidden: sum.hidden.into_iter().map(|x| x / k).collect(),
    })
}

/// Impute row `r` of a dataset with the stream keyed by `(config.seed, r)`,
/// so the result does not depend on how rows are scheduled.
pub fn impute_row(model: &RbmModel, row: MaskedRow<'_>, r: usize, config: &ImputationConfig) -> Result<Imputation> {
    impute_keyed(model, row, config, seed::derive(config.seed, &[tag::IMPUTE, r as u64]))
}

/// Expected visible values for every row (observed cells are copied).
pub fn impute_all(model: &RbmModel, view: &ObservedView<'_>, config: &ImputationConfig) -> Result<Array2<f64>> {
    check_layout(model, view)?;
    let rows = config
        .exec
        .try_map(view.n_rows(), |r| impute_row(model, view.row(r), r, config))?;
    Ok(stack(model.n_visible(), rows.iter().map(|i| &i.visible)))
}

/// Label scores for every row with the row's labels treated as unobserved and
/// only its observed features pinned. Used to fit the decision threshold on
/// known labels.
pub fn label_scores_unpinned(model: &RbmModel, view: &ObservedView<'_>, config: &ImputationConfig) -> Result<Array2<f64>> {
    check_layout(model, view)?;
    let layout = model.layout();
    let rows = config.exec.try_map(view.n_rows(), |r| {
        let row = view.row(r);
        let mut mask = row.observed_mask().to_vec();
        for &l in layout.labels() {
            mask[l] = false;
        }
        let values: Vec<f64> = (0..row.len()).map(|i| row.get(i).unwrap_or(0.0)).collect();
        let unpinned = MaskedRow::new(&values, &mask)?;
        impute_row(model, unpinned, r, config)
    })?;
    Ok(stack(model.n_visible(), rows.iter().map(|i| &i.visible)))
}

fn check_layout(model: &RbmModel, view: &ObservedView<'_>) -> Result<()> {
    if view.n_visible() != model.n_visible() || view.layout() != model.layout() {
        return Err(Error::Shape("dataset layout does not match the model".into()));
    }
    Ok(())
}

fn stack<'a>(nv: usize, rows: impl Iterator<Item = &'a Vec<f64>>) -> Array2<f64> {
    let flat: Vec<f64> = rows.flatten().copied().collect();
    Array2::from_shape_vec((flat.len() / nv.max(1), nv), flat).expect("rows have nv entries")
}

/// `1` exactly where the score exceeds `t`.
pub fn decode_multilabel(scores: &[f64], t: f64) -> Vec<bool> {
    scores.iter().map(|&p| p > t).collect()
}

/// Index of the largest score; the lowest index wins ties.
pub fn decode_multiclass(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in scores.iter().enumerate() {
        if p > scores[best] {
            best = k;
        }
    }
    best
}

pub fn one_hot(k: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| i == k).collect()
}

/// Candidate thresholds `0.01, 0.02, ..., 0.99`.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (1..=99).map(|k| k as f64 / 100.0)
}

/// Grid threshold with the best Hamming accuracy of `score > t` against the
/// known labels; the smallest one among ties.
pub fn learn_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("no observed labels to fit a threshold on".into()));
    }
    let mut best = (f64::NEG_INFINITY, 0.5);
    for t in threshold_grid() {
        let acc = hamming_accuracy(&decode_multilabel(scores, t), labels)?;
        if acc > best.0 {
            best = (acc, t);
        }
    }
    Ok(best.1)
}

/// Fit the threshold on the observed free labels of a dataset.
pub fn learn_threshold_on(model: &RbmModel, data: &IncompleteDataset, config: &ImputationConfig) -> Result<f64> {
    let scores = label_scores_unpinned(model, &data.view(), config)?;
    let mut s = Vec::new();
    let mut y = Vec::new();
    for l in data.layout().free_labels() {
        for r in 0..data.n_rows() {
            if let Some(v) = data.view().row(r).get(l) {
                s.push(scores[[r, l]]);
                y.push(v == 1.0);
            }
        }
    }
    learn_threshold(&s, &y)
}

/// Batch imputation CSV: one row per instance; feature columns hold the
/// imputed value (original scale) at masked positions and are empty
/// elsewhere, free labels get a probability and a decoded column, and each
/// class group gets its probabilities and the predicted class.
pub fn write_imputation_csv(
    path: &Path,
    data: &IncompleteDataset,
    imputed: &Array2<f64>,
    threshold: f64,
) -> Result<()> {
    let layout = data.layout();
    let names = data.column_names();
    let free = layout.free_labels();
    let mut header = vec!["row".to_string()];
    header.extend(layout.features().iter().map(|&c| names[c].clone()));
    for &l in &free {
        header.push(format!("p:{}", names[l]));
        header.push(format!("pred:{}", names[l]));
    }
    for (g, group) in layout.class_groups().iter().enumerate() {
        header.extend(group.iter().map(|&c| format!("p:{}", names[c])));
        header.push(format!("pred:group{g}"));
    }
    let err = |e: csv::Error| Error::io(path.display().to_string(), std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(&header).map_err(err)?;
    let view = data.view();
    let reveal = data.reveal();
    for r in 0..data.n_rows() {
        let row = view.row(r);
        let mut rec = vec![r.to_string()];
        for &c in layout.features() {
            rec.push(if row.is_observed(c) {
                String::new()
            } else {
                reveal.destandardize(c, imputed[[r, c]]).to_string()
            });
        }
        for &l in &free {
            rec.push(imputed[[r, l]].to_string());
            rec.push(((imputed[[r, l]] > threshold) as u8).to_string());
        }
        for group in layout.class_groups() {
            let scores: Vec<f64> = group.iter().map(|&c| imputed[[r, c]]).collect();
            rec.extend(scores.iter().map(|p| p.to_string()));
            let k = decode_multiclass(&scores);
            rec.push(names[group[k]].clone());
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}
