//! Conflict reduction engine for developer-community comments.
//!
//! The engine runs four phases over a comment: offence detection (rules,
//! toxicity score and a linear classifier), offence classification into the
//! Personal / Racial / Swearing taxonomy, highlighting of the offending spans,
//! and generation of three non-offensive paraphrase suggestions. The
//! [`corpus`] module holds the machinery used for prevalence studies over
//! whole comment dumps.
//!
//! ```
//! use crs_core::pipeline::Engine;
//!
//! let engine = Engine::builtin().unwrap();
//! let report = engine.analyze("you are an idiot").unwrap();
//! assert!(report.verdict.is_offensive());
//! assert_eq!(report.suggestions.len(), 3);
//! ```

pub mod artifacts;
pub mod corpus;
pub mod data;
mod http;
pub mod lexicon;
pub mod ml;
pub mod normalize;
pub mod paraphrase;
pub mod pipeline;
pub mod rules;
pub mod scoring;
pub mod sentiment;
pub mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use normalize::{normalize, NormalizeOptions, NormalizedText};
pub use pipeline::{AnalysisReport, Engine, EngineContext, Mode, Verdict};
pub use rules::{RuleMatch, RuleSet};

/// The three offence classes a comment can carry. A comment may carry several.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OffenceClass {
    Personal,
    Racial,
    Swearing,
}

impl OffenceClass {
    /// Fixed order used for tie-breaking and rendering.
    pub const ALL: [OffenceClass; 3] = [
        OffenceClass::Personal,
        OffenceClass::Racial,
        OffenceClass::Swearing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OffenceClass::Personal => "Personal",
            OffenceClass::Racial => "Racial",
            OffenceClass::Swearing => "Swearing",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OffenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown offence class {0:?}")]
pub struct UnknownClass(pub String);

impl FromStr for OffenceClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "personal" => Ok(OffenceClass::Personal),
            "racial" => Ok(OffenceClass::Racial),
            "swearing" => Ok(OffenceClass::Swearing),
            _ => Err(UnknownClass(s.to_string())),
        }
    }
}

/// Ordered set of offence classes.
pub type ClassSet = BTreeSet<OffenceClass>;

/// Half-open byte range `[start, end)` into a UTF-8 string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}
