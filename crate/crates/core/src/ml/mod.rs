//! Feature extraction, training-corpus construction, SGD-trained linear
//! classifiers, evaluation and model persistence.
//!
//! Feature layout for a vocabulary of size `V`:
//! `[0..V) tf-idf | V regex flag | V+1 compound | V+2..V+4 polarity one-hot]`.

mod augment;
mod eval;
mod features;
mod linear;
mod persist;

use thiserror::Error;

use crate::OffenceClass;

pub use augment::{
    augment, build_training_corpus, dataset_fingerprint, CorpusBuilder, LabelledDoc, Stopwords,
    Thesaurus, AUGMENT_COPIES,
};
pub use eval::{
    evaluate, evaluate_multilabel, ClassMetrics, Confusion, EvalReport, MultiLabelReport,
};
pub use features::{
    fit_tfidf, vectorize, FeatureVector, Featurizer, Vocabulary, AUX_FEATURES, DEFAULT_MIN_DF,
};
pub use linear::{
    predict, predict_classes, train_binary, train_binary_report, train_multilabel,
    train_test_split, Example, LinearModel, Loss, MultiLabelModel, TrainConfig, TrainReport,
};
pub use persist::{load_model, save_model, ModelArtifact, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("clean list has {clean} texts but offensive list has {offensive}; they must be equal")]
    SizeMismatch { offensive: usize, clean: usize },
    #[error("no offensive texts supplied")]
    EmptyInput,
    #[error("training data contains a single label")]
    SingleClassDataset,
    #[error("class {0} has no positive or no negative examples")]
    ClassMissing(OffenceClass),
    #[error("feature vector has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("evaluation dataset is empty")]
    EmptyDataset,
    #[error("model format version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u64, supported: u32 },
    #[error("corrupt model artifact: {0}")]
    CorruptModel(String),
    #[error("training text rejected: {0}")]
    InvalidText(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}
