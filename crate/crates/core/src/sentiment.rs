//! Lexicon-and-rules valence sentiment, used as classifier features.
//!
//! Token valences are adjusted for emphasis (ALL-CAPS in mixed-case text,
//! a preceding intensity booster), flipped and damped by a negator in the
//! three preceding words, summed, pushed away from zero by trailing
//! exclamation marks, and squashed with `x / sqrt(x^2 + alpha)`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::data;
use crate::lexicon::{parse_term_list, parse_weighted, DataError};
use crate::normalize::{NormalizedText, Token};

pub const NEGATION_SCALAR: f64 = -0.74;
pub const CAPS_INCREMENT: f64 = 0.733;
pub const EXCLAMATION_INCREMENT: f64 = 0.292;
pub const MAX_EXCLAMATIONS: usize = 3;
pub const NORMALIZATION_ALPHA: f64 = 15.0;
pub const NEGATION_WINDOW: usize = 3;
pub const LABEL_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub fn from_compound(compound: f64) -> Self {
        if compound >= LABEL_THRESHOLD {
            Polarity::Positive
        } else if compound <= -LABEL_THRESHOLD {
            Polarity::Negative
        } else {
            Polarity::Neutral
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentResult {
    pub compound: f64,
    pub label: Polarity,
}

impl SentimentResult {
    pub fn neutral() -> Self {
        SentimentResult {
            compound: 0.0,
            label: Polarity::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValenceLexicon {
    valences: BTreeMap<String, f64>,
    boosters: BTreeMap<String, f64>,
    negators: BTreeSet<String>,
}

impl ValenceLexicon {
    pub fn parse(valences: &str, boosters: &str, negators: &str) -> Result<Self, DataError> {
        let valences = parse_weighted("valence lexicon", valences)?;
        if let Some((t, v)) = valences.iter().find(|(_, v)| !(-4.0..=4.0).contains(*v)) {
            return Err(DataError::new(
                "valence lexicon",
                0,
                format!("valence of {t:?} is {v}, outside [-4, 4]"),
            ));
        }
        let boosters = parse_weighted("booster list", boosters)?;
        Ok(ValenceLexicon {
            valences,
            boosters,
            negators: parse_term_list(negators),
        })
    }

    pub fn builtin() -> Arc<ValenceLexicon> {
        static LEX: OnceLock<Arc<ValenceLexicon>> = OnceLock::new();
        LEX.get_or_init(|| {
            Arc::new(
                ValenceLexicon::parse(data::VALENCE_TSV, data::BOOSTERS_TSV, data::NEGATORS_TXT)
                    .expect("builtin valence lexicon"),
            )
        })
        .clone()
    }

    pub fn valence(&self, term: &str) -> Option<f64> {
        self.valences.get(term).copied()
    }

    pub fn booster(&self, term: &str) -> Option<f64> {
        self.boosters.get(term).copied()
    }

    pub fn is_negator(&self, term: &str) -> bool {
        self.negators.contains(term) || term.ends_with("n't")
    }

    pub fn valences(&self) -> impl Iterator<Item = (&str, f64)> {
        self.valences.iter().map(|(t, &v)| (t.as_str(), v))
    }

    pub fn negators(&self) -> impl Iterator<Item = &str> {
        self.negators.iter().map(String::as_str)
    }

    pub fn boosters(&self) -> impl Iterator<Item = (&str, f64)> {
        self.boosters.iter().map(|(t, &v)| (t.as_str(), v))
    }
}

fn key(token: &Token) -> String {
    token.surface.replace('\u{2019}', "'")
}

fn is_all_caps(surface: &str) -> bool {
    surface.chars().any(char::is_uppercase) && !surface.chars().any(char::is_lowercase)
}

fn toward(value: f64, magnitude: f64) -> f64 {
    if value > 0.0 {
        value + magnitude
    } else if value < 0.0 {
        value - magnitude
    } else {
        value
    }
}

pub fn compound_of(sum: f64) -> f64 {
    (sum / (sum * sum + NORMALIZATION_ALPHA).sqrt()).clamp(-1.0, 1.0)
}

pub fn analyze_sentiment(norm: &NormalizedText, lex: &ValenceLexicon) -> SentimentResult {
    let words: Vec<&Token> = norm.word_tokens().collect();
    let keys: Vec<String> = words.iter().map(|t| key(t)).collect();
    let caps: Vec<bool> = words
        .iter()
        .map(|t| is_all_caps(norm.original_surface(t)))
        .collect();
    let mixed_case = caps.iter().any(|&c| c)
        && words
            .iter()
            .any(|t| norm.original_surface(t).chars().any(char::is_lowercase));

    let mut sum = 0.0;
    for (i, k) in keys.iter().enumerate() {
        let Some(mut v) = lex.valence(k) else {
            continue;
        };
        if mixed_case && caps[i] {
            v = toward(v, CAPS_INCREMENT);
        }
        if let Some(inc) = i.checked_sub(1).and_then(|p| lex.booster(&keys[p])) {
            v = toward(v, inc);
        }
        if keys[i.saturating_sub(NEGATION_WINDOW)..i]
            .iter()
            .any(|w| lex.is_negator(w))
        {
            v *= NEGATION_SCALAR;
        }
        sum += v;
    }

    let bangs = norm
        .original()
        .trim_end()
        .chars()
        .rev()
        .take_while(|&c| c == '!')
        .count()
        .min(MAX_EXCLAMATIONS);
    sum = toward(sum, bangs as f64 * EXCLAMATION_INCREMENT);

    let compound = compound_of(sum);
    SentimentResult {
        compound,
        label: Polarity::from_compound(compound),
    }
}
