use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MlError;
use crate::data;
use crate::lexicon::{parse_alternatives, parse_term_list, DataError};
use crate::normalize::{normalize, NormalizeOptions, NormalizedText};
use crate::paraphrase::match_case;
use crate::rules::RuleSet;
use crate::ClassSet;

/// Augmented copies produced per clean text.
pub const AUGMENT_COPIES: usize = 2;
/// Words replaced per augmented copy.
const DEFAULT_K: usize = 1;
/// Fresh seeds tried before an augmented copy falls back to its source text.
const MAX_ATTEMPTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Thesaurus {
    entries: BTreeMap<String, Vec<String>>,
}

impl Thesaurus {
    pub fn parse(src: &str) -> Result<Self, DataError> {
        Ok(Thesaurus {
            entries: parse_alternatives("thesaurus", src)?,
        })
    }

    pub fn builtin() -> Arc<Thesaurus> {
        static T: OnceLock<Arc<Thesaurus>> = OnceLock::new();
        T.get_or_init(|| {
            Arc::new(Thesaurus::parse(data::THESAURUS_TSV).expect("builtin thesaurus"))
        })
        .clone()
    }

    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<S>)>,
        S: Into<String>,
    {
        Thesaurus {
            entries: entries
                .into_iter()
                .map(|(k, v)| {
                    (
                        k.into().to_lowercase(),
                        v.into_iter().map(Into::into).collect(),
                    )
                })
                .filter(|(_, v): &(String, Vec<String>)| !v.is_empty())
                .collect(),
        }
    }

    pub fn synonyms(&self, term: &str) -> Option<&[String]> {
        self.entries.get(term).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    pub fn parse(src: &str) -> Self {
        Stopwords(parse_term_list(src))
    }

    pub fn builtin() -> Arc<Stopwords> {
        static S: OnceLock<Arc<Stopwords>> = OnceLock::new();
        S.get_or_init(|| Arc::new(Stopwords::parse(data::STOPWORDS_TXT)))
            .clone()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.contains(term)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Replace `min(k, eligible)` seeded-random non-stopword words that have a
/// thesaurus entry with their first synonym. Everything else is kept as is.
pub fn augment(
    norm: &NormalizedText,
    thesaurus: &Thesaurus,
    stopwords: &Stopwords,
    k: usize,
    seed: u64,
) -> String {
    let eligible: Vec<_> = norm
        .word_tokens()
        .filter(|t| !stopwords.contains(&t.surface))
        .filter_map(|t| thesaurus.synonyms(&t.surface).map(|s| (t, &s[0])))
        .collect();
    let amount = k.min(eligible.len());
    if amount == 0 {
        return norm.original().to_string();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, eligible.len(), amount).into_vec();
    chosen.sort_unstable();

    let original = norm.original();
    let mut out = String::with_capacity(original.len() + 16);
    let mut pos = 0;
    for i in chosen {
        let (tok, syn) = eligible[i];
        out.push_str(&original[pos..tok.start]);
        out.push_str(&match_case(norm.original_surface(tok), syn));
        pos = tok.end;
    }
    out.push_str(&original[pos..]);
    out
}

/// One labelled training text. `classes` is empty for clean texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelledDoc {
    pub text: String,
    pub label: bool,
    #[serde(default)]
    pub classes: ClassSet,
}

impl LabelledDoc {
    pub fn offensive(text: impl Into<String>, classes: ClassSet) -> Self {
        LabelledDoc {
            text: text.into(),
            label: true,
            classes,
        }
    }

    pub fn clean(text: impl Into<String>) -> Self {
        LabelledDoc {
            text: text.into(),
            label: false,
            classes: ClassSet::new(),
        }
    }
}

/// Short sha256 fingerprint of a labelled dataset.
pub fn dataset_fingerprint(docs: &[LabelledDoc]) -> String {
    let mut h = Sha256::new();
    for d in docs {
        h.update((d.text.len() as u64).to_le_bytes());
        h.update(d.text.as_bytes());
        h.update([d.label as u8]);
        for c in &d.classes {
            h.update([c.index() as u8]);
        }
        h.update([0xff]);
    }
    hex::encode(&h.finalize()[..8])
}

/// Builds the balanced training corpus: offensive texts, an equal number of
/// clean texts, and two synonym-augmented copies of every clean text.
#[derive(Debug, Clone)]
pub struct CorpusBuilder {
    pub thesaurus: Arc<Thesaurus>,
    pub stopwords: Arc<Stopwords>,
    pub rules: Arc<RuleSet>,
    pub options: NormalizeOptions,
    pub k: usize,
}

impl CorpusBuilder {
    pub fn builtin() -> Self {
        CorpusBuilder {
            thesaurus: Thesaurus::builtin(),
            stopwords: Stopwords::builtin(),
            rules: RuleSet::builtin(),
            options: NormalizeOptions::default(),
            k: DEFAULT_K,
        }
    }

    fn augmented(&self, text: &str, rng: &mut ChaCha8Rng) -> String {
        let Ok(norm) = normalize(text, &self.options) else {
            return text.to_string();
        };
        for _ in 0..MAX_ATTEMPTS {
            let candidate = augment(
                &norm,
                &self.thesaurus,
                &self.stopwords,
                self.k,
                rng.random(),
            );
            if candidate == text {
                return candidate;
            }
            let safe = normalize(&candidate, &self.options)
                .map(|n| self.rules.is_clean(&n))
                .unwrap_or(false);
            if safe {
                return candidate;
            }
        }
        text.to_string()
    }

    /// Output order: offensive texts, clean texts, then the augmented copies
    /// grouped per clean text.
    pub fn build(
        &self,
        offensive: &[LabelledDoc],
        clean: &[String],
        seed: u64,
    ) -> Result<Vec<LabelledDoc>, MlError> {
        if offensive.is_empty() {
            return Err(MlError::EmptyInput);
        }
        if clean.len() != offensive.len() {
            return Err(MlError::SizeMismatch {
                offensive: offensive.len(),
                clean: clean.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(offensive.len() * (2 + AUGMENT_COPIES));
        out.extend(offensive.iter().map(|d| LabelledDoc {
            label: true,
            ..d.clone()
        }));
        out.extend(clean.iter().map(LabelledDoc::clean));
        for text in clean {
            for _ in 0..AUGMENT_COPIES {
                out.push(LabelledDoc::clean(self.augmented(text, &mut rng)));
            }
        }
        Ok(out)
    }
}

/// [`CorpusBuilder::build`] with the builtin rule set and stopwords.
pub fn build_training_corpus(
    offensive: &[LabelledDoc],
    clean: &[String],
    thesaurus: Arc<Thesaurus>,
    seed: u64,
) -> Result<Vec<LabelledDoc>, MlError> {
    CorpusBuilder {
        thesaurus,
        ..CorpusBuilder::builtin()
    }
    .build(offensive, clean, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::OffenceClass;

    fn norm(s: &str) -> NormalizedText {
        normalize(s, &NormalizeOptions::default()).unwrap()
    }

    fn wrong_only() -> Thesaurus {
        Thesaurus::from_entries([("wrong", vec!["incorrect"])])
    }

    #[test]
    fn k_zero_is_identity() {
        let s = "the code is wrong";
        assert_eq!(
            augment(&norm(s), &wrong_only(), &Stopwords::builtin(), 0, 1),
            s
        );
    }

    #[test]
    fn single_eligible_token_is_replaced() {
        for seed in 0..10 {
            let out = augment(
                &norm("the code is wrong"),
                &wrong_only(),
                &Stopwords::builtin(),
                1,
                seed,
            );
            assert_eq!(out, "the code is incorrect");
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let th = Thesaurus::builtin();
        let sw = Stopwords::builtin();
        let n = norm("this function has a bug and the error message is wrong");
        let a = augment(&n, &th, &sw, 2, 42);
        assert_eq!(a, augment(&n, &th, &sw, 2, 42));
        assert_ne!(a, n.original());
    }

    #[test]
    fn stopwords_and_code_are_not_replaced() {
        let th = Thesaurus::from_entries([("the", vec!["a"]), ("wrong", vec!["incorrect"])]);
        let out = augment(&norm("the `wrong` value"), &th, &Stopwords::builtin(), 5, 0);
        assert_eq!(out, "the `wrong` value");
    }

    #[test]
    fn capitalisation_is_kept() {
        let out = augment(
            &norm("Wrong again"),
            &wrong_only(),
            &Stopwords::default(),
            1,
            0,
        );
        assert_eq!(out, "Incorrect again");
    }

    #[test]
    fn corpus_proportions() {
        let off = vec![LabelledDoc::offensive(
            "you idiot",
            [OffenceClass::Personal].into(),
        )];
        let clean = vec!["the code is wrong".to_string()];
        let ds = build_training_corpus(&off, &clean, Thesaurus::builtin(), 7).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.iter().filter(|d| d.label).count(), 1);
        assert_eq!(
            ds,
            build_training_corpus(&off, &clean, Thesaurus::builtin(), 7).unwrap()
        );
    }

    #[test]
    fn corpus_errors() {
        let th = Thesaurus::builtin();
        assert_eq!(
            build_training_corpus(&[], &[], th.clone(), 0),
            Err(MlError::EmptyInput)
        );
        let off = vec![LabelledDoc::offensive("you idiot", ClassSet::new())];
        assert_eq!(
            build_training_corpus(&off, &[], th, 0),
            Err(MlError::SizeMismatch {
                offensive: 1,
                clean: 0
            })
        );
    }

    #[test]
    fn unsafe_augmentations_are_rejected() {
        let b = CorpusBuilder {
            thesaurus: Arc::new(Thesaurus::from_entries([("wrong", vec!["idiotic"])])),
            ..CorpusBuilder::builtin()
        };
        let off = vec![LabelledDoc::offensive("x", ClassSet::new())];
        let ds = b
            .build(&off, &["the code is wrong".to_string()], 3)
            .unwrap();
        assert!(ds[2..].iter().all(|d| d.text == "the code is wrong"));
    }

    #[test]
    fn builtin_thesaurus_is_rule_clean() {
        let rules = RuleSet::builtin();
        for (term, syns) in Thesaurus::builtin().iter() {
            for s in std::iter::once(term).chain(syns.iter().map(String::as_str)) {
                assert!(rules.is_clean(&norm(s)), "{s:?} matches a rule");
            }
        }
    }
}
