//! One-vs-rest linear SVM with squared hinge loss.
//!
//! Each binary problem minimises
//! `½(‖w‖² + b²) + C Σ_i max(0, 1 − y_i (wᵀx_i + b))²`;
//! the bias is handled as the weight of a constant feature. The solver is
//! primal coordinate descent: a one-dimensional Newton step per coordinate
//! followed by an Armijo backtracking search, so every accepted step lowers
//! the objective.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter, FEATURE_MAGIC, MODEL_MAGIC};

pub const DEFAULT_REG_C: f64 = 1.0;
pub const DEFAULT_EPOCHS: usize = 200;

const ARMIJO_SIGMA: f64 = 0.01;
const MAX_BACKTRACK: usize = 40;
/// Early-stop threshold on the largest coordinate derivative of an epoch.
const GRAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub reg_c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            reg_c: DEFAULT_REG_C,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }
}

/// `N×F` features with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: Array2<f64>,
    pub labels: Vec<u32>,
    /// Optional display names indexed by label id.
    pub class_names: Vec<String>,
}

impl LabeledFeatures {
    pub fn new(features: Array2<f64>, labels: Vec<u32>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            class_names: Vec::new(),
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = names;
        self
    }

    pub fn class_name(&self, label: u32) -> String {
        self.class_names
            .get(label as usize)
            .cloned()
            .unwrap_or_else(|| label.to_string())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(FEATURE_MAGIC);
        w.put_u64(self.len() as u64);
        w.put_u32(self.dim() as u32);
        for &v in self.features.iter() {
            w.put_f32(v as f32);
        }
        for &l in &self.labels {
            w.put_u32(l);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes, FEATURE_MAGIC)?;
        let n = format::to_usize(r.u64()?, "feature count")?;
        let f = r.u32()? as usize;
        let len = n
            .checked_mul(f)
            .ok_or_else(|| Error::Format("feature matrix too large".into()))?;
        let values: Vec<f64> = r.f32_vec(len)?.into_iter().map(f64::from).collect();
        let labels = r.u32_vec(n)?;
        r.finish()?;
        let features = Array2::from_shape_vec((n, f), values)
            .map_err(|e| Error::Format(format!("dimension mismatch: {e}")))?;
        Self::new(features, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?).map_err(|e| e.in_file(path))
    }
}

/// `C` linear scorers `w_cᵀx + b_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub class_labels: Vec<String>,
    /// `C×F`.
    pub weights: Array2<f64>,
    pub biases: Vec<f64>,
}

impl LinearModel {
    pub fn new(class_labels: Vec<String>, weights: Array2<f64>, biases: Vec<f64>) -> Result<Self> {
        let c = class_labels.len();
        if weights.nrows() != c || biases.len() != c {
            return Err(Error::InvalidArgument(format!(
                "{c} labels, {} weight rows, {} biases",
                weights.nrows(),
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite model parameter".into()));
        }
        Ok(Self {
            class_labels,
            weights,
            biases,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Class scores for one feature vector.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .outer_iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(MODEL_MAGIC);
        w.put_u32(self.classes() as u32);
        w.put_u32(self.dim() as u32);
        for &v in self.weights.iter() {
            w.put_f32(v as f32);
        }
        for &b in &self.biases {
            w.put_f32(b as f32);
        }
        for l in &self.class_labels {
            w.put_str(l);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes, MODEL_MAGIC)?;
        let c = r.u32()? as usize;
        let f = r.u32()? as usize;
        let len = c
            .checked_mul(f)
            .ok_or_else(|| Error::Format("model too large".into()))?;
        let weights: Vec<f64> = r.f32_vec(len)?.into_iter().map(f64::from).collect();
        let biases: Vec<f64> = r.f32_vec(c)?.into_iter().map(f64::from).collect();
        let labels = (0..c).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        let weights = Array2::from_shape_vec((c, f), weights)
            .map_err(|e| Error::Format(format!("dimension mismatch: {e}")))?;
        Self::new(labels, weights, biases).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?).map_err(|e| e.in_file(path))
    }
}

/// Trained model plus the per-class objective after every epoch.
#[derive(Debug, Clone)]
pub struct SvmTraining {
    pub model: LinearModel,
    /// Class label ids in model order.
    pub class_ids: Vec<u32>,
    /// `histories[c][0]` is the objective at `w = 0`.
    pub histories: Vec<Vec<f64>>,
}

impl SvmTraining {
    pub fn final_objectives(&self) -> Vec<f64> {
        self.histories.iter().map(|h| *h.last().unwrap()).collect()
    }
}

pub fn svm_train(data: &LabeledFeatures, params: &SvmParams) -> Result<LinearModel> {
    svm_train_traced(data, params).map(|t| t.model)
}

pub fn svm_train_traced(data: &LabeledFeatures, params: &SvmParams) -> Result<SvmTraining> {
    if !(params.reg_c > 0.0 && params.reg_c.is_finite()) {
        return Err(Error::InvalidArgument(format!("reg_c must be > 0, got {}", params.reg_c)));
    }
    if data.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    if data.features.nrows() != data.labels.len() {
        return Err(Error::InvalidArgument("feature/label count mismatch".into()));
    }
    let mut class_ids = data.labels.clone();
    class_ids.sort_unstable();
    class_ids.dedup();
    if class_ids.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, found {}",
            class_ids.len()
        )));
    }

    let (n, f) = data.features.dim();
    // column-major copy with a trailing constant column for the bias
    let mut columns: Vec<Vec<f64>> = (0..f).map(|j| data.features.column(j).to_vec()).collect();
    columns.push(vec![1.0; n]);

    let solved: Vec<(Vec<f64>, Vec<f64>)> = class_ids
        .par_iter()
        .enumerate()
        .map(|(c, &id)| {
            let y: Vec<f64> = data
                .labels
                .iter()
                .map(|&l| if l == id { 1.0 } else { -1.0 })
                .collect();
            let seed = params.seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            binary_cd(&columns, &y, params.reg_c, params.epochs, seed)
        })
        .collect();

    let mut weights = Array2::<f64>::zeros((class_ids.len(), f));
    let mut biases = Vec::with_capacity(class_ids.len());
    let mut histories = Vec::with_capacity(class_ids.len());
    for (c, (w, hist)) in solved.into_iter().enumerate() {
        weights.row_mut(c).iter_mut().zip(&w[..f]).for_each(|(a, &b)| *a = b);
        biases.push(w[f]);
        histories.push(hist);
    }
    let labels = class_ids.iter().map(|&id| data.class_name(id)).collect();
    Ok(SvmTraining {
        model: LinearModel::new(labels, weights, biases)?,
        class_ids,
        histories,
    })
}

/// Squared-hinge primal objective given slacks `b_i = 1 − y_i wᵀx_i`.
fn primal_objective(w: &[f64], slack: &[f64], c: f64) -> f64 {
    0.5 * w.iter().map(|v| v * v).sum::<f64>()
        + c * slack.iter().map(|&b| if b > 0.0 { b * b } else { 0.0 }).sum::<f64>()
}

/// Returns the weights (bias last) and the objective after every epoch.
fn binary_cd(columns: &[Vec<f64>], y: &[f64], c: f64, epochs: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let dim = columns.len();
    let mut w = vec![0.0; dim];
    let mut slack = vec![1.0; y.len()];
    let mut history = vec![primal_objective(&w, &slack, c)];
    let mut order: Vec<usize> = (0..dim).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut worst_grad = 0.0f64;
        for &j in &order {
            let col = &columns[j];
            let mut g = w[j];
            let mut h = 1.0;
            for ((&b, &yi), &xij) in slack.iter().zip(y).zip(col) {
                if b > 0.0 {
                    g -= 2.0 * c * yi * xij * b;
                    h += 2.0 * c * xij * xij;
                }
            }
            worst_grad = worst_grad.max(g.abs());
            if g.abs() <= GRAD_TOL {
                continue;
            }
            let d = -g / h;
            let loss_at = |z: f64| -> f64 {
                slack
                    .iter()
                    .zip(y)
                    .zip(col)
                    .map(|((&b, &yi), &xij)| {
                        let nb = b - yi * xij * z;
                        let new = if nb > 0.0 { nb * nb } else { 0.0 };
                        let old = if b > 0.0 { b * b } else { 0.0 };
                        new - old
                    })
                    .sum::<f64>()
            };
            let mut z = d;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACK {
                let delta = w[j] * z + 0.5 * z * z + c * loss_at(z);
                if delta <= -ARMIJO_SIGMA * z * z {
                    accepted = true;
                    break;
                }
                z *= 0.5;
            }
            if !accepted {
                continue;
            }
            w[j] += z;
            for ((b, &yi), &xij) in slack.iter_mut().zip(y).zip(col) {
                *b -= yi * xij * z;
            }
        }
        history.push(primal_objective(&w, &slack, c));
        if worst_grad <= GRAD_TOL {
            break;
        }
    }
    (w, history)
}

/// Index into `model.class_labels` of the best-scoring class per row; ties
/// go to the lowest index.
pub fn svm_predict(model: &LinearModel, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    if features.ncols() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "features have dimension {}, model expects {}",
            features.ncols(),
            model.dim()
        )));
    }
    Ok(features
        .outer_iter()
        .map(|row| {
            let x = row.to_vec();
            argmax(&model.scores(&x))
        })
        .collect())
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_separable() {
        let data = LabeledFeatures::new(array![[1.0, 0.0], [0.0, 1.0]], vec![0, 1]).unwrap();
        let model = svm_train(&data, &SvmParams::default()).unwrap();
        assert_eq!(svm_predict(&model, data.features.view()).unwrap(), vec![0, 1]);
        assert_eq!(model.class_labels, vec!["0", "1"]);
    }

    #[test]
    fn class_names_flow_into_model() {
        let data = LabeledFeatures::new(array![[1.0, 0.0], [0.0, 1.0]], vec![1, 0])
            .unwrap()
            .with_class_names(vec!["cat".into(), "dog".into()]);
        let model = svm_train(&data, &SvmParams::default()).unwrap();
        assert_eq!(model.class_labels, vec!["cat", "dog"]);
        assert_eq!(svm_predict(&model, data.features.view()).unwrap(), vec![1, 0]);
    }

    #[test]
    fn single_class_rejected() {
        let data = LabeledFeatures::new(array![[1.0], [2.0]], vec![3, 3]).unwrap();
        assert!(matches!(
            svm_train(&data, &SvmParams::default()),
            Err(Error::InvalidArgument(_))
        ));
        let bad = LabeledFeatures::new(array![[f64::NAN], [2.0]], vec![0, 1]).unwrap();
        assert!(matches!(
            svm_train(&bad, &SvmParams::default()),
            Err(Error::InvalidInput(_))
        ));
        let data = LabeledFeatures::new(array![[1.0], [2.0]], vec![0, 1]).unwrap();
        let p = SvmParams { reg_c: 0.0, ..Default::default() };
        assert!(svm_train(&data, &p).is_err());
    }

    #[test]
    fn predict_examples() {
        let model = LinearModel::new(
            vec!["A".into(), "B".into()],
            array![[1.0, 0.0], [0.0, 1.0]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let x = array![[3.0, 1.0], [1.0, 1.0]];
        assert_eq!(svm_predict(&model, x.view()).unwrap(), vec![0, 0]);
        assert!(svm_predict(&model, array![[1.0, 2.0, 3.0]].view()).is_err());
    }

    #[test]
    fn argmax_ignores_common_shift() {
        let s = [0.3, -1.0, 0.7, 0.7];
        let shifted: Vec<f64> = s.iter().map(|v| v + 123.5).collect();
        assert_eq!(argmax(&s), 2);
        assert_eq!(argmax(&shifted), 2);
    }

    #[test]
    fn objective_history_is_monotone() {
        let x = Array2::from_shape_fn((30, 5), |(i, j)| ((i * 13 + j * 7) % 11) as f64 / 11.0 - 0.4);
        let labels = (0..30).map(|i| (i % 3) as u32).collect();
        let data = LabeledFeatures::new(x, labels).unwrap();
        let t = svm_train_traced(&data, &SvmParams { reg_c: 5.0, epochs: 50, seed: 9 }).unwrap();
        for h in &t.histories {
            for pair in h.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9, "{pair:?}");
            }
        }
    }
}
