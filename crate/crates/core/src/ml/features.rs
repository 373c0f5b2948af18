use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::MlError;
use crate::normalize::NormalizedText;
use crate::rules::RuleSet;
use crate::sentiment::{analyze_sentiment, Polarity, SentimentResult, ValenceLexicon};

/// Slots appended after the tf-idf block.
pub const AUX_FEATURES: usize = 5;
pub const DEFAULT_MIN_DF: usize = 2;

/// Term index and document frequencies of a fitted tf-idf vectorizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabRecord", into = "VocabRecord")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
}

impl TryFrom<VocabRecord> for Vocabulary {
    type Error = MlError;

    fn try_from(r: VocabRecord) -> Result<Self, MlError> {
        Vocabulary::from_parts(r.terms, r.df, r.n_docs)
    }
}

impl From<Vocabulary> for VocabRecord {
    fn from(v: Vocabulary) -> Self {
        VocabRecord {
            terms: v.terms,
            df: v.df,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, df: Vec<usize>, n_docs: usize) -> Result<Self, MlError> {
        if terms.len() != df.len() {
            return Err(MlError::CorruptModel(format!(
                "vocabulary has {} terms but {} document frequencies",
                terms.len(),
                df.len()
            )));
        }
        if let Some(d) = df.iter().find(|&&d| d == 0 || d > n_docs) {
            return Err(MlError::CorruptModel(format!(
                "document frequency {d} outside 1..={n_docs}"
            )));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(MlError::CorruptModel(format!(
                    "duplicate vocabulary term {t:?}"
                )));
            }
        }
        Ok(Vocabulary {
            terms,
            df,
            n_docs,
            index,
        })
    }

    /// Number of tf-idf columns.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Full feature dimension including the auxiliary slots.
    pub fn dim(&self) -> usize {
        self.terms.len() + AUX_FEATURES
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.df[i])
    }

    pub fn idf_at(&self, column: usize) -> f64 {
        let n = self.n_docs as f64;
        ((1.0 + n) / (1.0 + self.df[column] as f64)).ln() + 1.0
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf_at(i))
    }
}

/// Fit over the word tokens of the folded texts. Columns are in
/// lexicographic term order.
pub fn fit_tfidf(corpus: &[NormalizedText], min_df: usize) -> Result<Vocabulary, MlError> {
    if corpus.is_empty() {
        return Err(MlError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus {
        let mut seen: Vec<&str> = doc.word_tokens().map(|t| t.surface.as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let (terms, dfs) = df
        .into_iter()
        .filter(|&(_, d)| d >= min_df)
        .map(|(t, d)| (t.to_string(), d))
        .unzip();
    Vocabulary::from_parts(terms, dfs, corpus.len())
}

/// Sparse feature vector, entries sorted by index with no explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    /// Build from arbitrary entries; zeros are dropped, duplicates summed.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in entries {
            assert!(i < dim, "feature index {i} out of range {dim}");
            *map.entry(i).or_default() += v;
        }
        FeatureVector {
            dim,
            entries: map.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_entries(values.len(), values.iter().copied().enumerate())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| weights[i] * v).sum()
    }
}

fn polarity_slot(label: Polarity) -> usize {
    match label {
        Polarity::Positive => 2,
        Polarity::Negative => 3,
        Polarity::Neutral => 4,
    }
}

pub fn vectorize(
    vocab: &Vocabulary,
    norm: &NormalizedText,
    regex_flag: bool,
    senti: &SentimentResult,
) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in norm.word_tokens() {
        if let Some(i) = vocab.index_of(&t.surface) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, tf)| (i, tf * vocab.idf_at(i)))
        .collect();
    let norm2 = entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
    if norm2 > 0.0 {
        for e in &mut entries {
            e.1 /= norm2;
        }
    }
    let v = vocab.len();
    if regex_flag {
        entries.push((v, 1.0));
    }
    if senti.compound != 0.0 {
        entries.push((v + 1, senti.compound));
    }
    entries.push((v + polarity_slot(senti.label), 1.0));
    FeatureVector {
        dim: vocab.dim(),
        entries,
    }
}

/// Bundles a vocabulary with the rule set and valence lexicon that produce
/// the auxiliary features.
#[derive(Debug, Clone)]
pub struct Featurizer {
    vocab: Arc<Vocabulary>,
    rules: Arc<RuleSet>,
    valence: Arc<ValenceLexicon>,
}

impl Featurizer {
    pub fn new(vocab: Arc<Vocabulary>, rules: Arc<RuleSet>, valence: Arc<ValenceLexicon>) -> Self {
        Featurizer {
            vocab,
            rules,
            valence,
        }
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn features(&self, norm: &NormalizedText) -> FeatureVector {
        let flag = !self.rules.is_clean(norm);
        let senti = analyze_sentiment(norm, &self.valence);
        vectorize(&self.vocab, norm, flag, &senti)
    }
}
