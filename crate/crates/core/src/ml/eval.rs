use std::collections::BTreeMap;

use serde::Serialize;

use super::linear::{predict, predict_classes, Example, LinearModel, MultiLabelModel};
use super::MlError;
use crate::OffenceClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    /// Per-label metrics for the positive and the negative label.
    pub fn report(&self) -> EvalReport {
        let neg_p = ratio(self.tn, self.tn + self.fn_);
        let neg_r = ratio(self.tn, self.tn + self.fp);
        EvalReport {
            accuracy: self.accuracy(),
            confusion: *self,
            per_class: vec![
                ClassMetrics {
                    label: "offensive".into(),
                    precision: self.precision(),
                    recall: self.recall(),
                    f1: self.f1(),
                    support: self.tp + self.fn_,
                },
                ClassMetrics {
                    label: "non-offensive".into(),
                    precision: neg_p,
                    recall: neg_r,
                    f1: f1(neg_p, neg_r),
                    support: self.tn + self.fp,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Confusion,
    pub per_class: Vec<ClassMetrics>,
}

pub fn evaluate(model: &LinearModel, examples: &[Example]) -> Result<EvalReport, MlError> {
    if examples.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let mut c = Confusion::default();
    for e in examples {
        c.record(predict(model, &e.features)?.0, e.label);
    }
    Ok(c.report())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiLabelReport {
    pub per_class: BTreeMap<OffenceClass, EvalReport>,
    /// Share of examples whose predicted class set equals the gold set.
    pub exact_match: f64,
}

/// Evaluate the one-vs-rest decision (with argmax fallback) per class.
pub fn evaluate_multilabel(
    mlm: &MultiLabelModel,
    examples: &[Example],
) -> Result<MultiLabelReport, MlError> {
    if examples.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let mut conf = [Confusion::default(); 3];
    let mut exact = 0;
    for e in examples {
        let predicted = predict_classes(mlm, &e.features)?;
        if predicted == e.classes {
            exact += 1;
        }
        for c in OffenceClass::ALL {
            conf[c.index()].record(predicted.contains(&c), e.classes.contains(&c));
        }
    }
    Ok(MultiLabelReport {
        per_class: OffenceClass::ALL
            .into_iter()
            .map(|c| (c, conf[c.index()].report()))
            .collect(),
        exact_match: ratio(exact, examples.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{FeatureVector, Loss};
    use crate::ClassSet;
    use approx::assert_abs_diff_eq;

    fn identity_model() -> LinearModel {
        LinearModel {
            weights: vec![1.0],
            bias: 0.0,
            loss: Loss::Hinge,
            trained_on: String::new(),
            version: 1,
        }
    }

    fn ex(x: f64, label: bool) -> Example {
        Example {
            features: FeatureVector::from_dense(&[x]),
            label,
            classes: ClassSet::new(),
        }
    }

    #[test]
    fn hand_computed_confusion() {
        let mut data = Vec::new();
        data.extend((0..8).map(|_| ex(1.0, true)));
        data.extend((0..2).map(|_| ex(1.0, false)));
        data.extend((0..2).map(|_| ex(-1.0, true)));
        data.extend((0..8).map(|_| ex(-1.0, false)));
        let r = evaluate(&identity_model(), &data).unwrap();
        assert_eq!(
            r.confusion,
            Confusion {
                tp: 8,
                fp: 2,
                fn_: 2,
                tn: 8
            }
        );
        assert_abs_diff_eq!(r.per_class[0].precision, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_class[0].recall, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(r.accuracy, 0.8, epsilon = 1e-12);
        assert_eq!(r.confusion.total(), data.len());
    }

    #[test]
    fn perfect_and_empty() {
        let r = evaluate(&identity_model(), &[ex(2.0, true), ex(-2.0, false)]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(evaluate(&identity_model(), &[]), Err(MlError::EmptyDataset));
    }
}
