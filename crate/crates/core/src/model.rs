//! RBM parameterization: energy, closed-form conditionals, sampling, and the
//! on-disk model container.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Prior attached to one visible unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VisibleUnit {
    /// Values in {0, 1}.
    Binary,
    /// Real valued with prior N(0, variance).
    Gaussian { variance: f64 },
}

impl VisibleUnit {
    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Config(format!(
                "Gaussian unit variance must be positive, got {variance}"
            )));
        }
        Ok(VisibleUnit::Gaussian { variance })
    }

    pub fn is_binary(self) -> bool {
        matches!(self, VisibleUnit::Binary)
    }

    /// Conditional expectation of the unit given its total input
    /// `a_i + sum_j w_ij h_j`. This is the binary activation probability or
    /// the Gaussian mean.
    #[inline]
    pub fn mean(self, input: f64) -> f64 {
        match self {
            VisibleUnit::Binary => sigmoid(input),
            VisibleUnit::Gaussian { variance } => input * variance,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, input: f64, rng: &mut R) -> f64 {
        match self {
            VisibleUnit::Binary => bernoulli(sigmoid(input), rng),
            VisibleUnit::Gaussian { variance } => {
                let z: f64 = StandardNormal.sample(rng);
                input * variance + z * variance.sqrt()
            }
        }
    }

    /// Draw from the prior-shaped initial distribution used to start chains:
    /// a fair coin for binary units, a standard normal for Gaussian units.
    #[inline]
    pub fn sample_initial<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            VisibleUnit::Binary => bernoulli(0.5, rng),
            VisibleUnit::Gaussian { .. } => StandardNormal.sample(rng),
        }
    }
}

#[inline]
pub fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Partition of the visible layer into features and labels, plus the one-hot
/// class groups among the labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibleLayout {
    n_visible: usize,
    features: Vec<usize>,
    labels: Vec<usize>,
    class_groups: Vec<Vec<usize>>,
}

impl VisibleLayout {
    pub fn new(
        n_visible: usize,
        features: Vec<usize>,
        labels: Vec<usize>,
        class_groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let mut role = vec![0u8; n_visible];
        for (&i, tag) in features
            .iter()
            .map(|i| (i, 1u8))
            .chain(labels.iter().map(|i| (i, 2u8)))
        {
            if i >= n_visible {
                return Err(Error::Config(format!(
                    "visible index {i} out of range ({n_visible} units)"
                )));
            }
            if role[i] != 0 {
                return Err(Error::Config(format!(
                    "visible unit {i} assigned more than one role"
                )));
            }
            role[i] = tag;
        }
        if let Some(i) = role.iter().position(|&r| r == 0) {
            return Err(Error::Config(format!("visible unit {i} has no role")));
        }
        let mut grouped = vec![false; n_visible];
        for group in &class_groups {
            if group.is_empty() {
                return Err(Error::Config("empty class group".into()));
            }
            for &i in group {
                if i >= n_visible || role[i] != 2 {
                    return Err(Error::Config(format!(
                        "class group member {i} is not a label unit"
                    )));
                }
                if grouped[i] {
                    return Err(Error::Config(format!(
                        "label unit {i} belongs to two class groups"
                    )));
                }
                grouped[i] = true;
            }
        }
        Ok(VisibleLayout {
            n_visible,
            features,
            labels,
            class_groups,
        })
    }

    /// Layout with every unit a feature.
    pub fn features_only(n_visible: usize) -> Self {
        VisibleLayout {
            n_visible,
            features: (0..n_visible).collect(),
            labels: Vec::new(),
            class_groups: Vec::new(),
        }
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_groups(&self) -> &[Vec<usize>] {
        &self.class_groups
    }

    /// Labels that do not belong to any class group (multi-label outputs).
    pub fn free_labels(&self) -> Vec<usize> {
        let mut grouped = vec![false; self.n_visible];
        for g in &self.class_groups {
            for &i in g {
                grouped[i] = true;
            }
        }
        self.labels.iter().copied().filter(|&i| !grouped[i]).collect()
    }

    pub fn is_label(&self, i: usize) -> bool {
        self.labels.contains(&i)
    }
}

/// Conditional law of one visible unit given the hidden layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitConditional {
    Bernoulli { p: f64 },
    Normal { mean: f64, variance: f64 },
}

/// Restricted Boltzmann machine with binary hidden units and binary or
/// Gaussian visible units.
///
/// Weights are stored dense, row-major by visible index (`n_visible x n_hidden`).
#[derive(Debug, Clone, PartialEq)]
pub struct RbmModel {
    weights: Array2<f64>,
    visible_bias: Array1<f64>,
    hidden_bias: Array1<f64>,
    units: Vec<VisibleUnit>,
    layout: VisibleLayout,
}

impl RbmModel {
    /// Zero-parameter model.
    pub fn new(units: Vec<VisibleUnit>, layout: VisibleLayout, n_hidden: usize) -> Result<Self> {
        let n_visible = units.len();
        if layout.n_visible() != n_visible {
            return Err(Error::Shape(format!(
                "layout covers {} units but {} unit specs given",
                layout.n_visible(),
                n_visible
            )));
        }
        if let Some(&i) = layout.labels().iter().find(|&&i| !units[i].is_binary()) {
            return Err(Error::Config(format!("label unit {i} must be binary")));
        }
        Ok(RbmModel {
            weights: Array2::zeros((n_visible, n_hidden)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
            units,
            layout,
        })
    }

    /// All-binary, all-feature model with the given parameters.
    pub fn binary(weights: Array2<f64>, visible_bias: Array1<f64>, hidden_bias: Array1<f64>) -> Result<Self> {
        let n_visible = weights.nrows();
        let mut m = RbmModel::new(
            vec![VisibleUnit::Binary; n_visible],
            VisibleLayout::features_only(n_visible),
            weights.ncols(),
        )?;
        m.set_parameters(weights, visible_bias, hidden_bias)?;
        Ok(m)
    }

    /// Weights drawn from N(0, weight_std^2), zero biases.
    pub fn random_init<R: Rng + ?Sized>(
        units: Vec<VisibleUnit>,
        layout: VisibleLayout,
        n_hidden: usize,
        weight_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut m = RbmModel::new(units, layout, n_hidden)?;
        let normal = Normal::new(0.0, weight_std)
            .map_err(|e| Error::Config(format!("weight std {weight_std}: {e}")))?;
        m.weights.mapv_inplace(|_| normal.sample(rng));
        Ok(m)
    }

    pub fn set_parameters(
        &mut self,
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
    ) -> Result<()> {
        if weights.dim() != self.weights.dim()
            || visible_bias.len() != self.n_visible()
            || hidden_bias.len() != self.n_hidden()
        {
            return Err(Error::Shape(format!(
                "parameters {:?}/{}/{} do not fit a {}x{} model",
                weights.dim(),
                visible_bias.len(),
                hidden_bias.len(),
                self.n_visible(),
                self.n_hidden()
            )));
        }
        self.weights = weights;
        self.visible_bias = visible_bias;
        self.hidden_bias = hidden_bias;
        Ok(())
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    pub fn units(&self) -> &[VisibleUnit] {
        &self.units
    }

    pub fn layout(&self) -> &VisibleLayout {
        &self.layout
    }

    pub fn weights_mut(&mut self) -> &mut Array2<f64> {
        &mut self.weights
    }

    pub fn visible_bias_mut(&mut self) -> &mut Array1<f64> {
        &mut self.visible_bias
    }

    pub fn hidden_bias_mut(&mut self) -> &mut Array1<f64> {
        &mut self.hidden_bias
    }

    pub fn is_all_binary(&self) -> bool {
        self.units.iter().all(|u| u.is_binary())
    }

    fn check_visible(&self, v: &ArrayView1<f64>) -> Result<()> {
        if v.len() != self.n_visible() {
            return Err(Error::Shape(format!(
                "visible vector has length {}, model has {} visible units",
                v.len(),
                self.n_visible()
            )));
        }
        Ok(())
    }

    fn check_hidden(&self, h: &ArrayView1<f64>) -> Result<()> {
        if h.len() != self.n_hidden() {
            return Err(Error::Shape(format!(
                "hidden vector has length {}, model has {} hidden units",
                h.len(),
                self.n_hidden()
            )));
        }
        Ok(())
    }

    /// `E(v, h) = -sum v_i w_ij h_j - sum a_i v_i - sum b_j h_j`.
    pub fn energy(&self, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
        self.check_visible(&v)?;
        self.check_hidden(&h)?;
        let interaction = v.dot(&self.weights.dot(&h));
        Ok(-interaction - self.visible_bias.dot(&v) - self.hidden_bias.dot(&h))
    }

    /// `out_j = b_j + sum_i v_i w_ij`. Zero coordinates of `v` are skipped,
    /// which makes binary inputs cheap.
    pub fn hidden_input_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n_visible());
        debug_assert_eq!(out.len(), self.n_hidden());
        out.copy_from_slice(self.hidden_bias.as_slice().expect("contiguous"));
        let w = self.weights.as_slice().expect("row-major weights");
        let nh = self.n_hidden();
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &w[i * nh..(i + 1) * nh];
            for (o, &wij) in out.iter_mut().zip(row) {
                *o += vi * wij;
            }
        }
    }

    /// `a_i + sum_j w_ij h_j` for one visible unit.
    #[inline]
    pub fn visible_input(&self, i: usize, h: &[f64]) -> f64 {
        let nh = self.n_hidden();
        let w = self.weights.as_slice().expect("row-major weights");
        let row = &w[i * nh..(i + 1) * nh];
        self.visible_bias[i] + row.iter().zip(h).map(|(w, h)| w * h).sum::<f64>()
    }

    /// Activation probabilities `q_j = sigmoid(sum_i v_i w_ij + b_j)`.
    pub fn hidden_conditional(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_visible(&v)?;
        let v = v.to_vec();
        let mut out = vec![0.0; self.n_hidden()];
        self.hidden_input_into(&v, &mut out);
        Ok(out.into_iter().map(sigmoid).collect())
    }

    /// Per-unit conditional law of the visible layer given `h`.
    pub fn visible_conditional(&self, h: ArrayView1<f64>) -> Result<Vec<UnitConditional>> {
        self.check_hidden(&h)?;
        let h = h.to_vec();
        Ok(self
            .units
            .iter()
            .enumerate()
            .map(|(i, unit)| {
                let input = self.visible_input(i, &h);
                match *unit {
                    VisibleUnit::Binary => UnitConditional::Bernoulli { p: sigmoid(input) },
                    VisibleUnit::Gaussian { variance } => UnitConditional::Normal {
                        mean: input * variance,
                        variance,
                    },
                }
            })
            .collect())
    }

    /// Check every parameter is finite.
    pub fn check_finite(&self) -> Result<()> {
        let bad = |name: &str, it: &mut dyn Iterator<Item = &f64>| -> Result<()> {
            match it.enumerate().find(|(_, x)| !x.is_finite()).map(|(k, _)| k) {
                Some(k) => Err(Error::NonFinite(format!("{name}[{k}] is not finite"))),
                None => Ok(()),
            }
        };
        bad("weights", &mut self.weights.iter())?;
        bad("visible_bias", &mut self.visible_bias.iter())?;
        bad("hidden_bias", &mut self.hidden_bias.iter())
    }

    /// Euclidean norm of the concatenated parameter vector.
    pub fn parameter_norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.visible_bias.iter())
            .chain(self.hidden_bias.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Model with hidden units reordered so that new unit `k` is old unit `perm[k]`.
    pub fn permute_hidden(&self, perm: &[usize]) -> Result<Self> {
        if !is_permutation(perm, self.n_hidden()) {
            return Err(Error::Shape("not a permutation of the hidden units".into()));
        }
        let mut m = self.clone();
        for (k, &old) in perm.iter().enumerate() {
            m.weights.column_mut(k).assign(&self.weights.column(old));
            m.hidden_bias[k] = self.hidden_bias[old];
        }
        Ok(m)
    }

    /// Model with visible units reordered so that new unit `k` is old unit
    /// `perm[k]`; the layout is remapped accordingly.
    pub fn permute_visible(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_visible();
        if !is_permutation(perm, n) {
            return Err(Error::Shape("not a permutation of the visible units".into()));
        }
        let mut inverse = vec![0; n];
        for (k, &old) in perm.iter().enumerate() {
            inverse[old] = k;
        }
        let map = |ix: &[usize]| ix.iter().map(|&i| inverse[i]).collect::<Vec<_>>();
        let layout = VisibleLayout::new(
            n,
            map(self.layout.features()),
            map(self.layout.labels()),
            self.layout.class_groups().iter().map(|g| map(g)).collect(),
        )?;
        let mut m = RbmModel::new(perm.iter().map(|&i| self.units[i]).collect(), layout, self.n_hidden())?;
        for (k, &old) in perm.iter().enumerate() {
            m.weights.row_mut(k).assign(&self.weights.row(old));
            m.visible_bias[k] = self.visible_bias[old];
        }
        m.hidden_bias.assign(&self.hidden_bias);
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
        );
        self.write_to(&mut f)
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes).map_err(|(offset, message)| Error::Format {
            path: path.to_path_buf(),
            offset,
            message,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let u64le = |w: &mut W, x: usize| w.write_all(&(x as u64).to_le_bytes());
        let idx = |w: &mut W, ix: &[usize]| -> std::io::Result<()> {
            u64le(w, ix.len())?;
            ix.iter().try_for_each(|&i| u64le(w, i))
        };
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        u64le(w, self.n_visible())?;
        u64le(w, self.n_hidden())?;
        for unit in &self.units {
            match *unit {
                VisibleUnit::Binary => w.write_all(&[0])?,
                VisibleUnit::Gaussian { variance } => {
                    w.write_all(&[1])?;
                    w.write_all(&variance.to_le_bytes())?;
                }
            }
        }
        idx(w, self.layout.features())?;
        idx(w, self.layout.labels())?;
        u64le(w, self.layout.class_groups().len())?;
        for g in self.layout.class_groups() {
            idx(w, g)?;
        }
        for x in self
            .weights
            .iter()
            .chain(self.visible_bias.iter())
            .chain(self.hidden_bias.iter())
        {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Parse the container; errors carry the byte offset.
    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, (u64, String)> {
        let mut r = ByteReader { bytes, pos: 0 };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err((0, "bad magic, not a model file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err((8, format!("unsupported format version {version}")));
        }
        let nv = r.usize()?;
        let nh = r.usize()?;
        let mut units = Vec::with_capacity(nv.min(1 << 20));
        for _ in 0..nv {
            let at = r.pos as u64;
            match r.u8()? {
                0 => units.push(VisibleUnit::Binary),
                1 => {
                    let variance = r.f64()?;
                    units.push(VisibleUnit::gaussian(variance).map_err(|e| (at, e.to_string()))?)
                }
                k => return Err((at, format!("unknown unit kind {k}"))),
            }
        }
        let features = r.indices()?;
        let labels = r.indices()?;
        let n_groups = r.usize()?;
        let mut groups = Vec::new();
        for _ in 0..n_groups {
            groups.push(r.indices()?);
        }
        let at = r.pos as u64;
        let layout =
            VisibleLayout::new(nv, features, labels, groups).map_err(|e| (at, e.to_string()))?;
        let mut model = RbmModel::new(units, layout, nh).map_err(|e| (at, e.to_string()))?;
        for x in model
            .weights
            .iter_mut()
            .chain(model.visible_bias.iter_mut())
            .chain(model.hidden_bias.iter_mut())
        {
            *x = r.f64()?;
        }
        if r.pos != bytes.len() {
            return Err((r.pos as u64, "trailing bytes after parameters".into()));
        }
        Ok(model)
    }
}

const MAGIC: &[u8; 8] = b"LOSSYRBM";
const FORMAT_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn read_exact(&mut self, buf: &mut [u8]) -> std::result::Result<(), (u64, String)> {
        let mut slice = self.bytes.get(self.pos..).unwrap_or(&[]);
        slice
            .read_exact(buf)
            .map_err(|_| (self.pos as u64, "truncated model file".to_string()))?;
        self.pos += buf.len();
        Ok(())
    }

    fn u8(&mut self) -> std::result::Result<u8, (u64, String)> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, (u64, String)> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn usize(&mut self) -> std::result::Result<usize, (u64, String)> {
        let at = self.pos as u64;
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        let x = u64::from_le_bytes(b);
        if x > (1 << 32) {
            return Err((at, format!("implausible count {x}")));
        }
        Ok(x as usize)
    }

    fn f64(&mut self) -> std::result::Result<f64, (u64, String)> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn indices(&mut self) -> std::result::Result<Vec<usize>, (u64, String)> {
        let n = self.usize()?;
        (0..n).map(|_| self.usize()).collect()
    }
}

fn is_permutation(perm: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    perm.len() == n
        && perm
            .iter()
            .all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

/// Draw `h` given activation probabilities.
pub fn sample_hidden<R: Rng + ?Sized>(q: ArrayView1<f64>, rng: &mut R) -> Array1<f64> {
    q.iter().map(|&p| bernoulli(p, rng)).collect()
}

/// Draw `v` from per-unit conditionals.
pub fn sample_visible<R: Rng + ?Sized>(conditional: &[UnitConditional], rng: &mut R) -> Array1<f64> {
    conditional
        .iter()
        .map(|c| match *c {
            UnitConditional::Bernoulli { p } => bernoulli(p, rng),
            UnitConditional::Normal { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + z * variance.sqrt()
            }
        })
        .collect()
}

/// Parameter-shaped accumulator used for gradients and sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl Gradient {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Gradient {
            weights: Array2::zeros((n_visible, n_hidden)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
        }
    }

    pub fn like(model: &RbmModel) -> Self {
        Self::zeros(model.n_visible(), model.n_hidden())
    }

    /// Add `scale * (v q^T, v, q)`.
    pub fn add_outer(&mut self, v: &[f64], q: &[f64], scale: f64) {
        let nh = q.len();
        let w = self.weights.as_slice_mut().expect("contiguous");
        for (i, &vi) in v.iter().enumerate() {
            self.visible_bias[i] += scale * vi;
            if vi == 0.0 {
                continue;
            }
            let s = scale * vi;
            for (g, &qj) in w[i * nh..(i + 1) * nh].iter_mut().zip(q) {
                *g += s * qj;
            }
        }
        for (g, &qj) in self.hidden_bias.iter_mut().zip(q) {
            *g += scale * qj;
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        self.weights.scaled_add(scale, &other.weights);
        self.visible_bias.scaled_add(scale, &other.visible_bias);
        self.hidden_bias.scaled_add(scale, &other.hidden_bias);
    }

    pub fn scale(&mut self, s: f64) {
        self.weights *= s;
        self.visible_bias *= s;
        self.hidden_bias *= s;
    }

    /// Concatenation `(weights row-major, visible_bias, hidden_bias)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(self.visible_bias.iter())
            .chain(self.hidden_bias.iter())
            .copied()
            .collect()
    }

    pub fn cosine_similarity(&self, other: &Gradient) -> f64 {
        let a = self.flatten();
        let b = other.flatten();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    pub fn max_abs_diff(&self, other: &Gradient) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Apply `theta += step * self` to a model.
    pub fn apply_to(&self, model: &mut RbmModel, step: f64) {
        model.weights.scaled_add(step, &self.weights);
        model.visible_bias.scaled_add(step, &self.visible_bias);
        model.hidden_bias.scaled_add(step, &self.hidden_bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;

    fn two_by_one() -> RbmModel {
        RbmModel::binary(array![[2.0], [3.0]], array![0.5, 0.5], array![-1.0]).unwrap()
    }

    #[test]
    fn energy_of_zero_configuration_is_zero() {
        let m = two_by_one();
        let e = m.energy(array![0.0, 0.0].view(), array![0.0].view()).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn energy_hand_expansion() {
        let m = two_by_one();
        let e = m.energy(array![1.0, 1.0].view(), array![1.0].view()).unwrap();
        assert_abs_diff_eq!(e, -5.0, epsilon = 1e-15);
    }

    #[test]
    fn energy_rejects_bad_shapes() {
        let m = two_by_one();
        assert!(matches!(
            m.energy(array![1.0].view(), array![1.0].view()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            m.energy(array![1.0, 0.0].view(), array![1.0, 1.0].view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn energy_scales_linearly_in_weights() {
        let m = two_by_one();
        let v = array![1.0, 0.0];
        let h = array![1.0];
        let bias_terms = -m.visible_bias().dot(&v) - m.hidden_bias().dot(&h);
        let e1 = m.energy(v.view(), h.view()).unwrap();
        let mut scaled = m.clone();
        scaled.weights_mut().mapv_inplace(|w| 3.5 * w);
        let e2 = scaled.energy(v.view(), h.view()).unwrap();
        assert_abs_diff_eq!(e2, 3.5 * (e1 - bias_terms) + bias_terms, epsilon = 1e-12);
    }

    #[test]
    fn hidden_conditional_zero_and_saturated() {
        let mut m = RbmModel::binary(Array2::zeros((3, 2)), Array1::zeros(3), Array1::zeros(2)).unwrap();
        let q = m.hidden_conditional(array![1.0, 0.0, 1.0].view()).unwrap();
        assert_eq!(q, array![0.5, 0.5]);
        m.hidden_bias_mut().fill(10.0);
        let q = m.hidden_conditional(array![1.0, 0.0, 1.0].view()).unwrap();
        assert_abs_diff_eq!(q[0], 0.999_954_602_131_297_6, epsilon = 1e-15);
    }

    #[test]
    fn visible_conditional_binary_and_gaussian() {
        let layout = VisibleLayout::features_only(2);
        let mut m = RbmModel::new(
            vec![VisibleUnit::Binary, VisibleUnit::gaussian(1.0).unwrap()],
            layout,
            1,
        )
        .unwrap();
        m.visible_bias_mut()[1] = 0.7;
        let c = m.visible_conditional(array![1.0].view()).unwrap();
        assert_eq!(c[0], UnitConditional::Bernoulli { p: 0.5 });
        assert_eq!(c[1], UnitConditional::Normal { mean: 0.7, variance: 1.0 });
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_abs_diff_eq!(sigmoid(0.3) + sigmoid(-0.3), 1.0, epsilon = 1e-16);
    }

    #[test]
    fn degenerate_probabilities_sample_deterministically() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_hidden(array![1.0, 0.0].view(), &mut rng), array![1.0, 0.0]);
        }
    }

    #[test]
    fn fair_coin_concentrates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let q = Array1::from_elem(100_000, 0.5);
        let mean = sample_hidden(q.view(), &mut rng).mean().unwrap();
        assert!((0.49..=0.51).contains(&mean), "{mean}");
    }

    #[test]
    fn sampling_is_seeded() {
        let c = vec![
            UnitConditional::Bernoulli { p: 0.3 },
            UnitConditional::Normal { mean: 1.0, variance: 2.0 },
        ];
        let a = sample_visible(&c, &mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        let b = sample_visible(&c, &mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn layout_validation() {
        assert!(VisibleLayout::new(3, vec![0, 1], vec![2], vec![vec![2]]).is_ok());
        assert!(VisibleLayout::new(3, vec![0, 1], vec![1, 2], vec![]).is_err());
        assert!(VisibleLayout::new(3, vec![0], vec![2], vec![]).is_err());
        assert!(VisibleLayout::new(3, vec![0, 1], vec![2], vec![vec![1]]).is_err());
        assert!(VisibleLayout::new(4, vec![0], vec![1, 2, 3], vec![vec![1, 2], vec![2, 3]]).is_err());
        let layout = VisibleLayout::new(3, vec![0], vec![1, 2], vec![]).unwrap();
        assert!(RbmModel::new(
            vec![VisibleUnit::Binary, VisibleUnit::gaussian(1.0).unwrap(), VisibleUnit::Binary],
            layout,
            2
        )
        .is_err());
    }

    #[test]
    fn model_container_round_trip_is_bit_exact() {
        let layout = VisibleLayout::new(4, vec![0, 1], vec![2, 3], vec![vec![2, 3]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut m = RbmModel::random_init(
            vec![
                VisibleUnit::gaussian(0.5).unwrap(),
                VisibleUnit::Binary,
                VisibleUnit::Binary,
                VisibleUnit::Binary,
            ],
            layout,
            3,
            1.0,
            &mut rng,
        )
        .unwrap();
        m.visible_bias_mut()[0] = f64::MIN_POSITIVE;
        m.hidden_bias_mut()[2] = -1.0 / 3.0;
        let bytes = m.to_bytes();
        let back = RbmModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, m);
    }

    #[test]
    fn model_container_reports_offsets() {
        assert_eq!(RbmModel::from_bytes(b"NOTAMODELFILE").unwrap_err().0, 0);
        let m = two_by_one();
        let bytes = m.to_bytes();
        let (offset, msg) = RbmModel::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert_eq!(offset as usize, bytes.len() - 8);
        assert!(msg.contains("truncated"));
    }

    #[test]
    fn permutations_relabel_units() {
        let m = RbmModel::binary(
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            array![0.1, 0.2, 0.3],
            array![-1.0, 1.0],
        )
        .unwrap();
        let p = m.permute_hidden(&[1, 0]).unwrap();
        assert_eq!(p.weights().column(0), m.weights().column(1));
        assert_eq!(p.hidden_bias()[0], 1.0);
        let p = m.permute_visible(&[2, 0, 1]).unwrap();
        assert_eq!(p.weights().row(0), m.weights().row(2));
        assert_eq!(p.visible_bias()[1], 0.1);
        assert!(m.permute_hidden(&[0, 0]).is_err());
    }

    #[test]
    fn gradient_outer_product() {
        let mut g = Gradient::zeros(2, 2);
        g.add_outer(&[1.0, 0.0], &[0.25, 0.5], 2.0);
        assert_eq!(g.weights, array![[0.5, 1.0], [0.0, 0.0]]);
        assert_eq!(g.visible_bias, array![2.0, 0.0]);
        assert_eq!(g.hidden_bias, array![0.5, 1.0]);
    }
}
