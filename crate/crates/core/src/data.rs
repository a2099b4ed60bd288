//! Datasets with an observation mask: loading (MNIST IDX, CSV), visible-layer
//! encoding, standardization, MCAR masking and the inductive train/test split.
//!
//! Ground truth for masked cells stays inside [`IncompleteDataset`]. Training
//! and imputation only ever see an [`ObservedView`], which hands out
//! [`MaskedRow`]s that refuse to return unobserved values. Evaluation code
//! goes through [`IncompleteDataset::reveal`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::{VisibleLayout, VisibleUnit};
use crate::seed::{self, tag};

/// Affine map between raw and model space for one column:
/// `model = (raw - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub scale: f64,
}

impl ColumnStats {
    pub const IDENTITY: ColumnStats = ColumnStats { mean: 0.0, scale: 1.0 };

    /// Mean and population standard deviation; a constant column gets scale 1.
    pub fn fit(values: impl Iterator<Item = f64>) -> Self {
        let xs: Vec<f64> = values.collect();
        if xs.is_empty() {
            return Self::IDENTITY;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        ColumnStats {
            mean,
            scale: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    #[inline]
    pub fn standardize(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.scale
    }

    #[inline]
    pub fn destandardize(&self, x: f64) -> f64 {
        x * self.scale + self.mean
    }
}

/// Masking rates and seed. `q_label` is the multi-label rate for free labels
/// and the multi-class rate for class groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub q_fea: f64,
    pub q_label: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(q_fea: f64, q_label: f64, seed: u64) -> Result<Self> {
        for (name, q) in [("q_fea", q_fea), ("q_label", q_label)] {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("{name} = {q} is outside [0, 1]")));
            }
        }
        Ok(MaskSpec { q_fea, q_label, seed })
    }
}

/// Value matrix with an observation mask, column roles and standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteDataset {
    /// Model-space values; cells without ground truth hold 0.
    values: Array2<f64>,
    /// Cells for which a ground-truth value exists.
    available: Array2<bool>,
    observed: Array2<bool>,
    units: Vec<VisibleUnit>,
    layout: VisibleLayout,
    stats: Vec<ColumnStats>,
    column_names: Vec<String>,
}

impl IncompleteDataset {
    /// Fully observed dataset from model-space values.
    pub fn from_values(
        values: Array2<f64>,
        units: Vec<VisibleUnit>,
        layout: VisibleLayout,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let nv = values.ncols();
        if units.len() != nv || layout.n_visible() != nv || column_names.len() != nv {
            return Err(Error::Shape(format!(
                "{} value columns, {} unit specs, {} layout units, {} names",
                nv,
                units.len(),
                layout.n_visible(),
                column_names.len()
            )));
        }
        for (r, row) in values.outer_iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                if units[i].is_binary() && x != 0.0 && x != 1.0 {
                    return Err(Error::Shape(format!(
                        "row {r}, column {i}: binary unit holds {x}"
                    )));
                }
            }
        }
        let shape = values.raw_dim();
        Ok(IncompleteDataset {
            values,
            available: Array2::from_elem(shape, true),
            observed: Array2::from_elem(shape, true),
            units,
            layout,
            stats: vec![ColumnStats::IDENTITY; nv],
            column_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_visible(&self) -> usize {
        self.values.ncols()
    }

    pub fn units(&self) -> &[VisibleUnit] {
        &self.units
    }

    pub fn layout(&self) -> &VisibleLayout {
        &self.layout
    }

    pub fn feature_stats(&self) -> &[ColumnStats] {
        &self.stats
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn observed_mask(&self) -> &Array2<bool> {
        &self.observed
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[[row, col]]
    }

    /// Cells that have ground truth but are hidden from the learner.
    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.available[[row, col]] && !self.observed[[row, col]]
    }

    pub fn n_masked(&self) -> usize {
        self.available
            .iter()
            .zip(self.observed.iter())
            .filter(|(&a, &o)| a && !o)
            .count()
    }

    /// The learner-facing view: observed entries only.
    pub fn view(&self) -> ObservedView<'_> {
        ObservedView { data: self }
    }

    /// Evaluation access to the ground truth behind the mask.
    pub fn reveal(&self) -> Revealed<'_> {
        Revealed { data: self }
    }

    /// Copy with every masked cell overwritten by `value`. A learner that
    /// respects the mask produces identical output on the poisoned copy.
    pub fn with_masked_poisoned(&self, value: f64) -> Self {
        let mut out = self.clone();
        ndarray::Zip::from(&mut out.values)
            .and(&self.observed)
            .for_each(|x, &o| {
                if !o {
                    *x = value
                }
            });
        out
    }

    /// Rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        IncompleteDataset {
            values: self.values.select(Axis(0), rows),
            available: self.available.select(Axis(0), rows),
            observed: self.observed.select(Axis(0), rows),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        IncompleteDataset {
            values: Array2::zeros((0, self.n_visible())),
            available: Array2::from_elem((0, self.n_visible()), false),
            observed: Array2::from_elem((0, self.n_visible()), false),
            units: self.units.clone(),
            layout: self.layout.clone(),
            stats: self.stats.clone(),
            column_names: self.column_names.clone(),
        }
    }

    /// Uniform random subset of `n` rows (kept in original order); the whole
    /// dataset when `n >= n_rows`.
    pub fn subsample(&self, n: usize, seed: u64) -> Self {
        if n >= self.n_rows() {
            return self.clone();
        }
        let mut rng = seed::rng(seed, &[tag::SUBSAMPLE]);
        let mut rows = index::sample(&mut rng, self.n_rows(), n).into_vec();
        rows.sort_unstable();
        self.select_rows(&rows)
    }

    /// Raw-scale value of a cell.
    fn raw(&self, row: usize, col: usize) -> f64 {
        self.stats[col].destandardize(self.values[[row, col]])
    }

    /// Re-express Gaussian columns with new statistics.
    fn restandardize(&mut self, stats: &[ColumnStats]) {
        for col in 0..self.n_visible() {
            let (old, new) = (self.stats[col], stats[col]);
            for r in 0..self.n_rows() {
                if self.available[[r, col]] {
                    let raw = old.destandardize(self.values[[r, col]]);
                    self.values[[r, col]] = new.standardize(raw);
                }
            }
        }
        self.stats = stats.to_vec();
    }

    /// Statistics of the Gaussian columns over available cells.
    fn fit_stats(&self) -> Vec<ColumnStats> {
        (0..self.n_visible())
            .map(|col| match self.units[col] {
                VisibleUnit::Binary => ColumnStats::IDENTITY,
                VisibleUnit::Gaussian { .. } => ColumnStats::fit(
                    (0..self.n_rows())
                        .filter(|&r| self.available[[r, col]])
                        .map(|r| self.raw(r, col)),
                ),
            })
            .collect()
    }

    /// Masked coordinates as `(row, column)` pairs in row-major order.
    pub fn masked_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ((r, c), &o) in self.observed.indexed_iter() {
            if !o && self.available[[r, c]] {
                out.push((r, c));
            }
        }
        out
    }

    /// Replace the mask with the given masked coordinates.
    pub fn with_mask_cells(&self, cells: &[(usize, usize)]) -> Result<Self> {
        let mut out = self.clone();
        out.observed.assign(&self.available);
        for &(r, c) in cells {
            if r >= self.n_rows() || c >= self.n_visible() {
                return Err(Error::Shape(format!(
                    "masked cell ({r}, {c}) outside a {}x{} dataset",
                    self.n_rows(),
                    self.n_visible()
                )));
            }
            out.observed[[r, c]] = false;
        }
        Ok(out)
    }

    pub fn write_mask_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["row", "column"]).map_err(|e| csv_error(path, e))?;
        for (r, c) in self.masked_cells() {
            w.write_record([r.to_string(), c.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_mask_csv(path: &Path) -> Result<Vec<(usize, usize)>> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut cells = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let field = |i: usize, name: &str| -> Result<usize> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Ingest {
                        path: path.to_path_buf(),
                        row: k + 1,
                        column: name.into(),
                        message: "expected a non-negative integer".into(),
                    })
            };
            cells.push((field(0, "row")?, field(1, "column")?));
        }
        Ok(cells)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Ingest {
        path: path.to_path_buf(),
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

/// Learner-facing, mask-respecting view of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct ObservedView<'a> {
    data: &'a IncompleteDataset,
}

impl<'a> ObservedView<'a> {
    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }

    pub fn n_visible(&self) -> usize {
        self.data.n_visible()
    }

    pub fn units(&self) -> &'a [VisibleUnit] {
        &self.data.units
    }

    pub fn layout(&self) -> &'a VisibleLayout {
        &self.data.layout
    }

    pub fn row(&self, r: usize) -> MaskedRow<'a> {
        MaskedRow {
            values: self.data.values.row(r).to_slice().expect("standard layout"),
            observed: self.data.observed.row(r).to_slice().expect("standard layout"),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = MaskedRow<'a>> + 'a {
        let data = self.data;
        (0..data.n_rows()).map(move |r| data.view().row(r))
    }
}

/// One partially observed visible vector.
#[derive(Debug, Clone, Copy)]
pub struct MaskedRow<'a> {
    values: &'a [f64],
    observed: &'a [bool],
}

impl<'a> MaskedRow<'a> {
    pub fn new(values: &'a [f64], observed: &'a [bool]) -> Result<Self> {
        if values.len() != observed.len() {
            return Err(Error::Shape(format!(
                "{} values but {} mask entries",
                values.len(),
                observed.len()
            )));
        }
        Ok(MaskedRow { values, observed })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<f64> {
        self.observed[i].then(|| self.values[i])
    }

    #[inline]
    pub fn is_observed(&self, i: usize) -> bool {
        self.observed[i]
    }

    pub fn observed_mask(&self) -> &'a [bool] {
        self.observed
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn to_options(&self) -> Vec<Option<f64>> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

/// Ground-truth access for scoring.
#[derive(Debug, Clone, Copy)]
pub struct Revealed<'a> {
    data: &'a IncompleteDataset,
}

impl Revealed<'_> {
    /// Model-space truth of a cell, if it has one.
    pub fn truth(&self, row: usize, col: usize) -> Option<f64> {
        self.data.available[[row, col]].then(|| self.data.values[[row, col]])
    }

    /// Raw-scale truth of a cell.
    pub fn raw_truth(&self, row: usize, col: usize) -> Option<f64> {
        self.truth(row, col)
            .map(|x| self.data.stats[col].destandardize(x))
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.data.is_masked(row, col)
    }

    pub fn destandardize(&self, col: usize, x: f64) -> f64 {
        self.data.stats[col].destandardize(x)
    }
}

/// Hide cells uniformly at random with exact counts:
/// `round(q_fea * n * |features|)` feature cells,
/// `round(q_label * n * |free labels|)` free label cells, and for each class
/// group `round(q_label * n)` instances with the whole group hidden.
///
/// The positions are drawn from the seed alone, never from the values. The
/// previous mask is replaced.
pub fn apply_mask(dataset: &IncompleteDataset, spec: &MaskSpec) -> IncompleteDataset {
    let mut out = dataset.clone();
    out.observed.assign(&dataset.available);
    let n = dataset.n_rows();
    let layout = dataset.layout();

    let hide_cells = |cols: &[usize], q: f64, stream: u64, out: &mut IncompleteDataset| {
        let total = n * cols.len();
        let k = exact_count(q, total);
        let mut rng = seed::rng(spec.seed, &[tag::MASK, stream]);
        for cell in index::sample(&mut rng, total, k) {
            out.observed[[cell / cols.len(), cols[cell % cols.len()]]] = false;
        }
    };
    hide_cells(layout.features(), spec.q_fea, 0, &mut out);
    hide_cells(&layout.free_labels(), spec.q_label, 1, &mut out);
    for (g, group) in layout.class_groups().iter().enumerate() {
        let k = exact_count(spec.q_label, n);
        let mut rng = seed::rng(spec.seed, &[tag::MASK, 2 + g as u64]);
        for r in index::sample(&mut rng, n, k) {
            for &c in group {
                out.observed[[r, c]] = false;
            }
        }
    }
    out
}

/// `round(q * total)`, clamped to `total`.
pub fn exact_count(q: f64, total: usize) -> usize {
    ((q * total as f64).round() as usize).min(total)
}

/// Row-wise random split. The test part has every label hidden; Gaussian
/// columns of both parts are re-standardized with statistics of the training
/// rows.
pub fn split_inductive(
    dataset: &IncompleteDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(IncompleteDataset, IncompleteDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let n = dataset.n_rows();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut seed::rng(seed, &[tag::SPLIT]));
    let n_train = (train_fraction * n as f64).round() as usize;
    let (train_rows, test_rows) = rows.split_at(n_train.min(n));
    let mut train_rows = train_rows.to_vec();
    let mut test_rows = test_rows.to_vec();
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    let mut train = dataset.select_rows(&train_rows);
    let mut test = dataset.select_rows(&test_rows);
    let stats = train.fit_stats();
    train.restandardize(&stats);
    test.restandardize(&stats);
    for &c in dataset.layout().labels() {
        test.observed.column_mut(c).fill(false);
    }
    Ok((train, test))
}

/// Decode an IDX image/label file pair: pixels are binarized at 128 and
/// labels become one 10-way class group.
pub fn parse_mnist_idx(
    images: &[u8],
    labels: &[u8],
    images_path: &Path,
    labels_path: &Path,
) -> Result<IncompleteDataset> {
    let fmt = |path: &Path, offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    let be32 = |bytes: &[u8], at: usize, path: &Path| -> Result<usize> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| fmt(path, at, "truncated header".into()))
    };
    let magic = be32(images, 0, images_path)?;
    if magic != 0x0000_0803 {
        return Err(fmt(images_path, 0, format!("bad magic {magic:#010x}, expected 0x00000803")));
    }
    let n = be32(images, 4, images_path)?;
    let rows = be32(images, 8, images_path)?;
    let cols = be32(images, 12, images_path)?;
    let pixels = rows * cols;
    let needed = 16 + n * pixels;
    if images.len() < needed {
        return Err(fmt(
            images_path,
            images.len(),
            format!("truncated: {n} images of {rows}x{cols} need {needed} bytes"),
        ));
    }
    let magic = be32(labels, 0, labels_path)?;
    if magic != 0x0000_0801 {
        return Err(fmt(labels_path, 0, format!("bad magic {magic:#010x}, expected 0x00000801")));
    }
    let n_labels = be32(labels, 4, labels_path)?;
    if n_labels != n {
        return Err(fmt(labels_path, 4, format!("{n_labels} labels for {n} images")));
    }
    if labels.len() < 8 + n {
        return Err(fmt(labels_path, labels.len(), format!("truncated: {n} labels need {} bytes", 8 + n)));
    }

    let n_classes = 10;
    let nv = pixels + n_classes;
    let mut values = Array2::zeros((n, nv));
    for r in 0..n {
        let img = &images[16 + r * pixels..16 + (r + 1) * pixels];
        for (i, &b) in img.iter().enumerate() {
            values[[r, i]] = if b >= 128 { 1.0 } else { 0.0 };
        }
        let label = labels[8 + r] as usize;
        if label >= n_classes {
            return Err(fmt(labels_path, 8 + r, format!("label {label} outside 0..9")));
        }
        values[[r, pixels + label]] = 1.0;
    }
    let group: Vec<usize> = (pixels..nv).collect();
    let layout = VisibleLayout::new(nv, (0..pixels).collect(), group.clone(), vec![group])?;
    let names = (0..pixels)
        .map(|i| format!("pixel{i}"))
        .chain((0..n_classes).map(|k| format!("class={k}")))
        .collect();
    IncompleteDataset::from_values(values, vec![VisibleUnit::Binary; nv], layout, names)
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<IncompleteDataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p.display().to_string(), e));
    parse_mnist_idx(&read(images_path)?, &read(labels_path)?, images_path, labels_path)
}

/// Role of one CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    /// Real-valued feature with a Gaussian unit, standardized at load.
    Feature,
    /// Feature with values in {0, 1}.
    BinaryFeature,
    /// Independent binary label.
    Label,
    /// Categorical class, expanded to a one-hot class group.
    Class,
    Ignore,
}

impl std::str::FromStr for ColumnRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "feature" | "gaussian" => ColumnRole::Feature,
            "binary" | "binary_feature" => ColumnRole::BinaryFeature,
            "label" => ColumnRole::Label,
            "class" => ColumnRole::Class,
            "ignore" => ColumnRole::Ignore,
            other => return Err(Error::Config(format!("unknown column role '{other}'"))),
        })
    }
}

/// Column roles for [`load_csv`]; `*` sets the default for unlisted columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvSchema {
    pub roles: BTreeMap<String, ColumnRole>,
    pub default: Option<ColumnRole>,
    /// Prior variance of Gaussian units.
    pub variance: Option<f64>,
}

impl CsvSchema {
    /// Parse `name = role` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut schema = CsvSchema::default();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, role) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("schema line {}: expected 'column = role'", k + 1))
            })?;
            let (name, role) = (name.trim(), role.trim());
            if name == "variance" {
                let v: f64 = role
                    .parse()
                    .map_err(|_| Error::Config(format!("schema line {}: bad variance", k + 1)))?;
                VisibleUnit::gaussian(v)?;
                schema.variance = Some(v);
            } else if name == "*" {
                schema.default = Some(role.parse()?);
            } else {
                schema.roles.insert(name.to_string(), role.parse()?);
            }
        }
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    fn role(&self, column: &str) -> Option<ColumnRole> {
        self.roles.get(column).copied().or(self.default)
    }
}

fn is_missing_cell(s: &str) -> bool {
    matches!(s, "" | "?" | "NA" | "na" | "NaN" | "nan")
}

/// Load a headed CSV file. Empty, `?`, `NA` and `NaN` cells count as missing
/// (no ground truth). Gaussian columns are standardized with statistics of
/// their present cells.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<IncompleteDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    for name in schema.roles.keys() {
        if !header.contains(name) {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                row: 1,
                column: name.clone(),
                message: "schema names a column missing from the header".into(),
            });
        }
    }
    let roles: Vec<ColumnRole> = header
        .iter()
        .map(|h| {
            schema.role(h).ok_or_else(|| Error::Ingest {
                path: path.to_path_buf(),
                row: 1,
                column: h.clone(),
                message: "column has no role in the schema".into(),
            })
        })
        .collect::<Result<_>>()?;
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))?;

    let ingest = |row: usize, col: usize, message: String| Error::Ingest {
        path: PathBuf::from(path),
        row: row + 2,
        column: header[col].clone(),
        message,
    };

    // Class columns: distinct values, numerically ordered when possible.
    let mut classes: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (c, role) in roles.iter().enumerate() {
        if *role == ColumnRole::Class {
            let set: BTreeSet<String> = records
                .iter()
                .filter_map(|r| r.get(c))
                .filter(|s| !is_missing_cell(s))
                .map(str::to_string)
                .collect();
            let mut vals: Vec<String> = set.into_iter().collect();
            if vals.iter().all(|v| v.parse::<f64>().is_ok()) {
                vals.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
            }
            classes.insert(c, vals);
        }
    }

    let variance = schema.variance.unwrap_or(1.0);
    let mut units = Vec::new();
    let mut names = Vec::new();
    let (mut features, mut labels, mut groups) = (Vec::new(), Vec::new(), Vec::new());
    // For each CSV column, the visible index (or first index of its group).
    let mut target = vec![usize::MAX; header.len()];
    for (c, role) in roles.iter().enumerate() {
        target[c] = units.len();
        match role {
            ColumnRole::Feature | ColumnRole::BinaryFeature => {
                features.push(units.len());
                units.push(if *role == ColumnRole::Feature {
                    VisibleUnit::gaussian(variance)?
                } else {
                    VisibleUnit::Binary
                });
                names.push(header[c].clone());
            }
            ColumnRole::Label => {
                labels.push(units.len());
                units.push(VisibleUnit::Binary);
                names.push(header[c].clone());
            }
            ColumnRole::Class => {
                let start = units.len();
                for v in &classes[&c] {
                    labels.push(units.len());
                    units.push(VisibleUnit::Binary);
                    names.push(format!("{}={}", header[c], v));
                }
                groups.push((start..units.len()).collect::<Vec<_>>());
            }
            ColumnRole::Ignore => {}
        }
    }
    let nv = units.len();
    let mut values = Array2::zeros((records.len(), nv));
    let mut available = Array2::from_elem((records.len(), nv), true);
    for (r, rec) in records.iter().enumerate() {
        if rec.len() != header.len() {
            return Err(ingest(r, rec.len().min(header.len() - 1), format!(
                "{} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        for (c, role) in roles.iter().enumerate() {
            let cell = &rec[c];
            let t = target[c];
            match role {
                ColumnRole::Ignore => {}
                ColumnRole::Class => {
                    let group = &classes[&c];
                    if is_missing_cell(cell) {
                        for k in 0..group.len() {
                            available[[r, t + k]] = false;
                        }
                    } else {
                        let k = group.iter().position(|v| v == cell).expect("collected above");
                        values[[r, t + k]] = 1.0;
                    }
                }
                _ => {
                    if is_missing_cell(cell) {
                        available[[r, t]] = false;
                        continue;
                    }
                    let x: f64 = cell
                        .parse()
                        .map_err(|_| ingest(r, c, format!("non-numeric cell '{cell}'")))?;
                    if !x.is_finite() {
                        return Err(ingest(r, c, format!("non-finite cell '{cell}'")));
                    }
                    if matches!(role, ColumnRole::Label | ColumnRole::BinaryFeature) && x != 0.0 && x != 1.0 {
                        return Err(ingest(r, c, format!("binary column holds {x}, expected 0 or 1")));
                    }
                    values[[r, t]] = x;
                }
            }
        }
    }
    let layout = VisibleLayout::new(nv, features, labels, groups)?;
    let observed = available.clone();
    let mut ds = IncompleteDataset {
        values,
        available,
        observed,
        units,
        layout,
        stats: vec![ColumnStats::IDENTITY; nv],
        column_names: names,
    };
    let stats = ds.fit_stats();
    ds.restandardize(&stats);
    Ok(ds)
}
