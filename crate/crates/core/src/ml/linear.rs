use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::FeatureVector;
use super::persist::FORMAT_VERSION;
use super::MlError;
use crate::{ClassSet, OffenceClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Hinge,
    Logistic,
}

impl Loss {
    fn value(self, z: f64) -> f64 {
        match self {
            Loss::Hinge => (1.0 - z).max(0.0),
            Loss::Logistic => {
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
        }
    }

    /// Negative derivative of the loss with respect to `z = y * margin`.
    fn slope(self, z: f64) -> f64 {
        match self {
            Loss::Hinge => {
                if z < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Loss::Logistic => 1.0 / (1.0 + z.exp()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Loss::Hinge => "hinge",
            Loss::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = MlError;

    fn from_str(s: &str) -> Result<Self, MlError> {
        match s {
            "hinge" => Ok(Loss::Hinge),
            "logistic" => Ok(Loss::Logistic),
            other => Err(MlError::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Initial step size, decayed as `eta0 / (1 + eta0 * l2 * t)`.
    pub learning_rate: f64,
    pub l2: f64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 10,
            learning_rate: 0.1,
            l2: 1e-4,
            loss: Loss::Hinge,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        if self.epochs < 1 {
            return Err(MlError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(MlError::InvalidConfig("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// A feature vector with its binary label and offence classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub label: bool,
    pub classes: ClassSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: Loss,
    pub trained_on: String,
    pub version: u32,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, fv: &FeatureVector) -> Result<f64, MlError> {
        if fv.dim() != self.weights.len() {
            return Err(MlError::DimensionMismatch {
                expected: self.weights.len(),
                got: fv.dim(),
            });
        }
        Ok(fv.dot(&self.weights) + self.bias)
    }
}

/// One-vs-rest models indexed by [`OffenceClass::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelModel {
    pub models: [LinearModel; 3],
}

impl MultiLabelModel {
    pub fn get(&self, class: OffenceClass) -> &LinearModel {
        &self.models[class.index()]
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn margins(&self, fv: &FeatureVector) -> Result<[f64; 3], MlError> {
        Ok([
            self.models[0].margin(fv)?,
            self.models[1].margin(fv)?,
            self.models[2].margin(fv)?,
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: LinearModel,
    /// Mean loss over each epoch's updates.
    pub epoch_losses: Vec<f64>,
}

fn fingerprint(examples: &[Example], labels: &[bool]) -> String {
    let mut h = Sha256::new();
    for (e, &y) in examples.iter().zip(labels) {
        h.update([y as u8]);
        h.update((e.features.dim() as u64).to_le_bytes());
        for &(i, v) in e.features.entries() {
            h.update((i as u64).to_le_bytes());
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

fn common_dim(examples: &[Example]) -> Result<usize, MlError> {
    let dim = examples.first().map(|e| e.features.dim()).unwrap_or(0);
    match examples.iter().find(|e| e.features.dim() != dim) {
        Some(e) => Err(MlError::DimensionMismatch {
            expected: dim,
            got: e.features.dim(),
        }),
        None => Ok(dim),
    }
}

/// Plain SGD on the regularized loss. The weight vector is kept as
/// `scale * w` so the L2 shrink costs O(1) per step; the bias is not
/// regularized. Single-threaded with a fixed update order.
fn sgd(examples: &[Example], labels: &[bool], cfg: &TrainConfig) -> Result<TrainReport, MlError> {
    cfg.validate()?;
    let dim = common_dim(examples)?;
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(MlError::SingleClassDataset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut w = vec![0.0f64; dim];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let mut t = 0u64;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let eta = cfg.learning_rate / (1.0 + cfg.learning_rate * cfg.l2 * t as f64);
            t += 1;
            let x = &examples[i].features;
            let y = if labels[i] { 1.0 } else { -1.0 };
            let z = y * (scale * x.dot(&w) + bias);
            total += cfg.loss.value(z);

            scale *= 1.0 - eta * cfg.l2;
            let step = eta * y * cfg.loss.slope(z);
            if step != 0.0 {
                for &(j, v) in x.entries() {
                    w[j] += step * v / scale;
                }
                bias += step;
            }
            if scale < 1e-9 {
                for wj in &mut w {
                    *wj *= scale;
                }
                scale = 1.0;
            }
        }
        epoch_losses.push(total / examples.len() as f64);
    }

    for wj in &mut w {
        *wj *= scale;
    }
    Ok(TrainReport {
        model: LinearModel {
            weights: w,
            bias,
            loss: cfg.loss,
            trained_on: fingerprint(examples, labels),
            version: FORMAT_VERSION,
        },
        epoch_losses,
    })
}

pub fn train_binary_report(
    examples: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainReport, MlError> {
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    sgd(examples, &labels, cfg)
}

pub fn train_binary(examples: &[Example], cfg: &TrainConfig) -> Result<LinearModel, MlError> {
    train_binary_report(examples, cfg).map(|r| r.model)
}

pub fn train_multilabel(
    examples: &[Example],
    cfg: &TrainConfig,
) -> Result<MultiLabelModel, MlError> {
    cfg.validate()?;
    let mut models = Vec::with_capacity(3);
    for class in OffenceClass::ALL {
        let labels: Vec<bool> = examples
            .iter()
            .map(|e| e.classes.contains(&class))
            .collect();
        let pos = labels.iter().filter(|&&y| y).count();
        if pos == 0 || pos == labels.len() {
            return Err(MlError::ClassMissing(class));
        }
        models.push(sgd(examples, &labels, cfg)?.model);
    }
    let models: [LinearModel; 3] = models.try_into().expect("three classes");
    Ok(MultiLabelModel { models })
}

pub fn predict(model: &LinearModel, fv: &FeatureVector) -> Result<(bool, f64), MlError> {
    let m = model.margin(fv)?;
    Ok((m > 0.0, m))
}

/// Classes with a positive margin, or the single best class when none is
/// positive. Ties go to the earlier class in [`OffenceClass::ALL`].
pub fn predict_classes(mlm: &MultiLabelModel, fv: &FeatureVector) -> Result<ClassSet, MlError> {
    let margins = mlm.margins(fv)?;
    Ok(classes_from_margins(margins))
}

pub(crate) fn classes_from_margins(margins: [f64; 3]) -> ClassSet {
    let positive: ClassSet = OffenceClass::ALL
        .into_iter()
        .filter(|c| margins[c.index()] > 0.0)
        .collect();
    if !positive.is_empty() {
        return positive;
    }
    let mut best = OffenceClass::Personal;
    for c in OffenceClass::ALL {
        if margins[c.index()] > margins[best.index()] {
            best = c;
        }
    }
    [best].into()
}

/// Seeded split of `0..n` into (train, test) index lists, `test_fraction`
/// of them going to test.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
    let train = idx.split_off(n_test);
    let mut test = idx;
    let mut train = train;
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
