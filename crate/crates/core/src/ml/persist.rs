use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::features::Vocabulary;
use super::linear::{LinearModel, Loss, MultiLabelModel};
use super::MlError;
use crate::OffenceClass;

pub const FORMAT_VERSION: u32 = 1;

/// A trained model together with the vocabulary it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelArtifact {
    Binary {
        vocab: Vocabulary,
        model: LinearModel,
    },
    MultiLabel {
        vocab: Vocabulary,
        model: MultiLabelModel,
    },
}

impl ModelArtifact {
    pub fn vocab(&self) -> &Vocabulary {
        match self {
            ModelArtifact::Binary { vocab, .. } | ModelArtifact::MultiLabel { vocab, .. } => vocab,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelArtifact::Binary { .. } => "binary",
            ModelArtifact::MultiLabel { .. } => "multilabel",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BinaryRecord {
    format_version: u32,
    kind: String,
    loss: Loss,
    vocab: Vocabulary,
    weights: Vec<f64>,
    bias: f64,
    trained_on: String,
}

#[derive(Serialize, Deserialize)]
struct MultiLabelRecord {
    format_version: u32,
    kind: String,
    loss: Loss,
    vocab: Vocabulary,
    classes: Vec<OffenceClass>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    trained_on: String,
}

pub fn save_model(artifact: &ModelArtifact, mut sink: impl Write) -> std::io::Result<()> {
    let json = match artifact {
        ModelArtifact::Binary { vocab, model } => serde_json::to_string(&BinaryRecord {
            format_version: FORMAT_VERSION,
            kind: "binary".into(),
            loss: model.loss,
            vocab: vocab.clone(),
            weights: model.weights.clone(),
            bias: model.bias,
            trained_on: model.trained_on.clone(),
        }),
        ModelArtifact::MultiLabel { vocab, model } => serde_json::to_string(&MultiLabelRecord {
            format_version: FORMAT_VERSION,
            kind: "multilabel".into(),
            loss: model.models[0].loss,
            vocab: vocab.clone(),
            classes: OffenceClass::ALL.to_vec(),
            weights: model.models.iter().map(|m| m.weights.clone()).collect(),
            bias: model.models.iter().map(|m| m.bias).collect(),
            trained_on: model.models[0].trained_on.clone(),
        }),
    }?;
    sink.write_all(json.as_bytes())?;
    sink.write_all(b"\n")
}

fn corrupt(e: impl std::fmt::Display) -> MlError {
    MlError::CorruptModel(e.to_string())
}

fn check_weights(vocab: &Vocabulary, weights: &[f64]) -> Result<(), MlError> {
    if weights.len() != vocab.dim() {
        return Err(corrupt(format!(
            "{} weights for a feature dimension of {}",
            weights.len(),
            vocab.dim()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(corrupt("non-finite weight"));
    }
    Ok(())
}

pub fn load_model(mut source: impl Read) -> Result<ModelArtifact, MlError> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(corrupt)?;
    let value: Value = serde_json::from_str(&text).map_err(corrupt)?;
    let version = value
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| corrupt("missing format_version"))?;
    if version != FORMAT_VERSION as u64 {
        return Err(MlError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    match value.get("kind").and_then(Value::as_str) {
        Some("binary") => {
            let r: BinaryRecord = serde_json::from_value(value).map_err(corrupt)?;
            check_weights(&r.vocab, &r.weights)?;
            Ok(ModelArtifact::Binary {
                model: LinearModel {
                    weights: r.weights,
                    bias: r.bias,
                    loss: r.loss,
                    trained_on: r.trained_on,
                    version: FORMAT_VERSION,
                },
                vocab: r.vocab,
            })
        }
        Some("multilabel") => {
            let r: MultiLabelRecord = serde_json::from_value(value).map_err(corrupt)?;
            if r.classes != OffenceClass::ALL || r.weights.len() != 3 || r.bias.len() != 3 {
                return Err(corrupt(
                    "multilabel model must list Personal, Racial, Swearing",
                ));
            }
            let mut models = Vec::with_capacity(3);
            for (weights, bias) in r.weights.into_iter().zip(r.bias) {
                check_weights(&r.vocab, &weights)?;
                models.push(LinearModel {
                    weights,
                    bias,
                    loss: r.loss,
                    trained_on: r.trained_on.clone(),
                    version: FORMAT_VERSION,
                });
            }
            Ok(ModelArtifact::MultiLabel {
                model: MultiLabelModel {
                    models: models.try_into().expect("three models"),
                },
                vocab: r.vocab,
            })
        }
        other => Err(corrupt(format!("unknown model kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{predict, FeatureVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> ModelArtifact {
        let vocab = Vocabulary::from_parts(vec!["a".into(), "b".into()], vec![1, 2], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let weights = (0..vocab.dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        ModelArtifact::Binary {
            vocab,
            model: LinearModel {
                weights,
                bias: 0.123456789,
                loss: Loss::Hinge,
                trained_on: "abc".into(),
                version: 1,
            },
        }
    }

    fn bytes(a: &ModelArtifact) -> Vec<u8> {
        let mut out = Vec::new();
        save_model(a, &mut out).unwrap();
        out
    }

    #[test]
    fn round_trip_predicts_identically() {
        let a = toy();
        let b = load_model(bytes(&a).as_slice()).unwrap();
        assert_eq!(a, b);
        let (ModelArtifact::Binary { model: ma, .. }, ModelArtifact::Binary { model: mb, .. }) =
            (&a, &b)
        else {
            unreachable!()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let v: Vec<f64> = (0..ma.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let fv = FeatureVector::from_dense(&v);
            assert_eq!(
                predict(ma, &fv).unwrap().1.to_bits(),
                predict(mb, &fv).unwrap().1.to_bits()
            );
        }
    }

    #[test]
    fn artifact_schema() {
        let v: Value = serde_json::from_slice(&bytes(&toy())).unwrap();
        for key in [
            "format_version",
            "kind",
            "loss",
            "vocab",
            "weights",
            "bias",
            "trained_on",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["kind"], "binary");
        assert_eq!(v["loss"], "hinge");
        assert_eq!(v["vocab"]["n_docs"], 2);
    }

    #[test]
    fn truncated_is_corrupt() {
        let b = bytes(&toy());
        assert!(matches!(
            load_model(&b[..b.len() / 2]),
            Err(MlError::CorruptModel(_))
        ));
    }

    #[test]
    fn future_version_is_rejected() {
        let mut v: Value = serde_json::from_slice(&bytes(&toy())).unwrap();
        v["format_version"] = 2.into();
        assert_eq!(
            load_model(v.to_string().as_bytes()),
            Err(MlError::VersionMismatch {
                found: 2,
                supported: 1
            })
        );
    }

    #[test]
    fn weight_length_is_checked() {
        let mut v: Value = serde_json::from_slice(&bytes(&toy())).unwrap();
        v["weights"] = serde_json::json!([1.0]);
        assert!(matches!(
            load_model(v.to_string().as_bytes()),
            Err(MlError::CorruptModel(_))
        ));
    }

    #[test]
    fn multilabel_round_trip() {
        let ModelArtifact::Binary { vocab, model } = toy() else {
            unreachable!()
        };
        let mut m2 = model.clone();
        m2.bias = -2.5;
        let a = ModelArtifact::MultiLabel {
            vocab,
            model: MultiLabelModel {
                models: [model.clone(), m2, model],
            },
        };
        let v: Value = serde_json::from_slice(&bytes(&a)).unwrap();
        assert_eq!(
            v["classes"],
            serde_json::json!(["Personal", "Racial", "Swearing"])
        );
        assert_eq!(load_model(bytes(&a).as_slice()).unwrap(), a);
    }
}
