//! Corpus ingestion, seeded sampling, prevalence scanning, class breakdowns
//! and inter-rater agreement.

mod ingest;
mod kappa;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{created_between, ingest, ingest_path, sample, Ingest, IngestWarning};
pub use kappa::{cohen_kappa, load_annotations, AnnotationFile, KappaResult, Projection};
pub use stats::{
    class_breakdown, format_percent, prevalence_hundredths, prevalence_rate, render_stats_table,
    scan_corpus, scan_corpus_with, ClassShare, CorpusStats, ExportRecord,
};

/// Canonical comment record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    pub platform: String,
    pub id: String,
    pub created_at: String,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guess from a file extension.
    pub fn from_path(path: &std::path::Path) -> Result<Format, CorpusError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        ext.parse()
    }
}

impl FromStr for Format {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, CorpusError> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("cannot read source: {0}")]
    UnreadableSource(String),
    #[error("unknown corpus format {0:?}; expected jsonl or csv")]
    UnknownFormat(String),
    #[error("sampling fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
    #[error("invalid counts: {offensive} offensive of {total}")]
    InvalidCounts { offensive: u64, total: u64 },
    #[error("export contains no offensive records")]
    EmptyExport,
    #[error("annotation files cover different ids ({0})")]
    IdMismatch(String),
    #[error("expected agreement is 1; kappa is undefined")]
    DegenerateMarginals,
    #[error("annotation file: {0}")]
    InvalidAnnotations(String),
    #[error("invalid date bound {0:?}")]
    InvalidDate(String),
}
