//! Reconstruction and classification scores over hidden entries, and their
//! aggregation across repeats.
//!
//! All functions take the pooled entries to be scored; selecting the masked
//! cells is the caller's job.

use std::fmt::Write as _;

use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a} predictions, {b} ground-truth entries")));
    }
    Ok(())
}

/// `sqrt(mean((truth - imputed)^2))` over the scored cells.
pub fn rmse(truth: &[f64], imputed: &[f64]) -> Result<f64> {
    same_len(imputed.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("rmse over an empty set of cells".into()));
    }
    let sse: f64 = truth.iter().zip(imputed).map(|(t, x)| (t - x) * (t - x)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half, over the pooled entries.
pub fn micro_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    same_len(scores.len(), truth.len())?;
    if let Some(k) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {k} is NaN")));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {n_pos} positive and {n_neg} negative entries"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Walk tie groups in ascending order; each positive beats every negative
    // below its group and half of the negatives inside it.
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let pos = order[start..end].iter().filter(|&&k| truth[k]).count();
        let neg = end - start - pos;
        wins += pos as f64 * (neg_below as f64 + 0.5 * neg as f64);
        neg_below += neg;
        start = end;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Fraction of entries where the prediction equals the truth.
pub fn hamming_accuracy(predicted: &[bool], truth: &[bool]) -> Result<f64> {
    same_len(predicted.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over an empty set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Macro average of one-vs-rest AUCs. `scores[s][k]` is the score of class
/// `k` for instance `s`; classes absent from `truth` are skipped.
pub fn averaged_auc(scores: &[Vec<f64>], truth: &[usize]) -> Result<f64> {
    same_len(scores.len(), truth.len())?;
    let n_classes = scores.first().map_or(0, Vec::len);
    if scores.iter().any(|s| s.len() != n_classes) || truth.iter().any(|&c| c >= n_classes) {
        return Err(Error::Shape("inconsistent class count".into()));
    }
    let mut present = vec![false; n_classes];
    for &c in truth {
        present[c] = true;
    }
    let classes: Vec<usize> = (0..n_classes).filter(|&k| present[k]).collect();
    if classes.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "averaged AUC needs at least 2 classes present, got {}",
            classes.len()
        )));
    }
    let mut total = 0.0;
    for &k in &classes {
        let col: Vec<f64> = scores.iter().map(|s| s[k]).collect();
        let is_k: Vec<bool> = truth.iter().map(|&c| c == k).collect();
        total += micro_auc(&col, &is_k)?;
    }
    Ok(total / classes.len() as f64)
}

/// Fraction of instances whose predicted class is the true one.
pub fn accuracy_multiclass(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    same_len(predicted.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over an empty set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Scores of one run. A metric is `None` when it does not apply to the
/// dataset or is undefined for this mask.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsReport {
    pub rmse: Option<f64>,
    /// RMSE in the standardized model space.
    pub rmse_standardized: Option<f64>,
    pub micro_auc: Option<f64>,
    pub hamming_accuracy: Option<f64>,
    pub averaged_auc: Option<f64>,
    pub accuracy: Option<f64>,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 6] = [
        "rmse",
        "rmse_standardized",
        "micro_auc",
        "hamming_accuracy",
        "averaged_auc",
        "accuracy",
    ];

    pub fn values(&self) -> [Option<f64>; 6] {
        [
            self.rmse,
            self.rmse_standardized,
            self.micro_auc,
            self.hamming_accuracy,
            self.averaged_auc,
            self.accuracy,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES
            .iter()
            .position(|&n| n == name)
            .and_then(|k| self.values()[k])
    }
}

/// Mean and sample standard deviation of one metric across repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Present only with more than one value.
    pub std: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Some(Summary { mean, std, n })
    }
}

/// Per-metric summaries over the repeats of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub n_repeats: usize,
    pub metrics: [Option<Summary>; 6],
}

impl AggregateReport {
    pub fn get(&self, name: &str) -> Option<Summary> {
        MetricsReport::NAMES
            .iter()
            .position(|&n| n == name)
            .and_then(|k| self.metrics[k])
    }
}

/// Summarize each metric over the reports where it is defined.
pub fn aggregate(reports: &[MetricsReport]) -> AggregateReport {
    let mut metrics = [None; 6];
    for (k, slot) in metrics.iter_mut().enumerate() {
        let mut values: Vec<f64> = reports.iter().filter_map(|r| r.values()[k]).collect();
        // Summation in sorted order keeps the result independent of the
        // order of the repeats.
        values.sort_by(f64::total_cmp);
        *slot = Summary::of(&values);
    }
    AggregateReport {
        n_repeats: reports.len(),
        metrics,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// One aggregated grid cell keyed by its masking rates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub q_fea: f64,
    pub q_label: f64,
    pub report: AggregateReport,
    /// Repeats that ended in an error.
    pub n_failed: usize,
}

/// CSV with `q_fea, q_label, n_repeats, n_failed` and a mean / std pair per
/// metric.
pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut s = String::from("q_fea,q_label,n_repeats,n_failed");
    for name in MetricsReport::NAMES {
        write!(s, ",{name}_mean,{name}_std").unwrap();
    }
    s.push('\n');
    for row in rows {
        write!(s, "{},{},{},{}", row.q_fea, row.q_label, row.report.n_repeats, row.n_failed).unwrap();
        for m in row.report.metrics {
            write!(s, ",{},{}", fmt_opt(m.map(|m| m.mean)), fmt_opt(m.and_then(|m| m.std))).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Aligned table, one block of `mean ± std` columns per metric that appears
/// anywhere in the grid.
pub fn grid_table(rows: &[GridRow]) -> String {
    let used: Vec<usize> = (0..MetricsReport::NAMES.len())
        .filter(|&k| rows.iter().any(|r| r.report.metrics[k].is_some()))
        .collect();
    let mut header = vec!["q_fea".to_string(), "q_label".to_string()];
    header.extend(used.iter().map(|&k| MetricsReport::NAMES[k].to_string()));
    let mut lines = vec![header];
    for row in rows {
        let mut cells = vec![format!("{:.2}", row.q_fea), format!("{:.2}", row.q_label)];
        for &k in &used {
            cells.push(match row.report.metrics[k] {
                Some(Summary { mean, std: Some(sd), .. }) => format!("{mean:.3} ± {sd:.3}"),
                Some(Summary { mean, std: None, .. }) => format!("{mean:.3}"),
                None => "-".into(),
            });
        }
        lines.push(cells);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, line) in lines.iter().enumerate() {
        let padded: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:>w$}"))
            .collect();
        out.push_str(&format!("| {} |\n", padded.join(" | ")));
        if n == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rmse_hand_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(matches!(rmse(&[], &[]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn micro_auc_hand_cases() {
        let truth = [true, true, false, false];
        assert_eq!(micro_auc(&[0.9, 0.4, 0.6, 0.1], &truth).unwrap(), 0.75);
        assert_eq!(micro_auc(&[0.9, 0.8, 0.2, 0.1], &truth).unwrap(), 1.0);
        assert_eq!(micro_auc(&[0.5; 4], &truth).unwrap(), 0.5);
        assert!(micro_auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(micro_auc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    #[test]
    fn accuracies() {
        assert_eq!(hamming_accuracy(&[true, false, true, true], &[true, false, false, true]).unwrap(), 0.75);
        assert!(hamming_accuracy(&[], &[]).is_err());
        let truth: Vec<usize> = (0..10).collect();
        let mut pred = truth.clone();
        pred[3] = 0;
        assert_eq!(accuracy_multiclass(&pred, &truth).unwrap(), 0.9);
        assert!(accuracy_multiclass(&[], &[]).is_err());
    }

    #[test]
    fn averaged_auc_cases() {
        let perfect = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.3, 0.7]];
        assert_eq!(averaged_auc(&perfect, &[0, 1, 1]).unwrap(), 1.0);
        let flat = vec![vec![0.5, 0.5]; 4];
        assert_eq!(averaged_auc(&flat, &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(averaged_auc(&flat, &[1, 1, 1, 1]).is_err());
    }

    #[test]
    fn summaries() {
        let one = aggregate(&[MetricsReport { accuracy: Some(0.9), ..Default::default() }]);
        let s = one.get("accuracy").unwrap();
        assert_eq!((s.mean, s.std), (0.9, None));
        let two = aggregate(&[
            MetricsReport { accuracy: Some(0.9), ..Default::default() },
            MetricsReport { accuracy: Some(0.7), ..Default::default() },
        ]);
        let s = two.get("accuracy").unwrap();
        assert_abs_diff_eq!(s.mean, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std.unwrap(), 0.02f64.sqrt(), epsilon = 1e-15);
        assert!(two.get("rmse").is_none());
    }

    #[test]
    fn grid_outputs() {
        let rows = vec![GridRow {
            q_fea: 0.5,
            q_label: 0.3,
            report: aggregate(&[MetricsReport { accuracy: Some(0.5), ..Default::default() }]),
            n_failed: 0,
        }];
        let csv = grid_csv(&rows);
        assert!(csv.starts_with("q_fea,q_label,n_repeats,n_failed,rmse_mean,rmse_std"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",0.500000,"));
        let table = grid_table(&rows);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("accuracy"));
        assert!(!table.contains("rmse"));
    }
}
