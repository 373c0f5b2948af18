//! Deterministic template generators for offensive and clean developer
//! comments. Used to train the builtin models and to build test corpora.
//!
//! Offensive and clean comments share the same carrier sentences; only the
//! slot filler differs, so the carriers carry no label signal.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawComment;
use crate::ml::LabelledDoc;
use crate::normalize::{normalize, NormalizeOptions, SubstitutionTable};
use crate::rules::{classes_of, RuleSet};
use crate::scoring::ToxicityLexicon;
use crate::{ClassSet, OffenceClass};

const SLOT: &str = "{}";

pub const CARRIERS: &[&str] = &[
    "you are such a {} for pushing this",
    "this {} patch broke the build again",
    "{}, did you even run the tests?",
    "who wrote this {} function",
    "the reviewer is a {} and I am done here",
    "what a {} way to handle errors",
    "honestly this library is {}",
    "stop being a {} and read the docs",
    "that {} answer did not help at all",
    "I think the {} config is the problem",
    "please close this {} issue",
    "the {} test keeps failing on CI",
    "great, another {} release",
    "why would anyone merge this {} code",
    "{} again? the docs explain this",
    "your {} pull request needs a rebase",
    "this is the {} part of the API",
    "ok {}, I will look at it tomorrow",
    "the maintainer gave a {} reply",
    "that {} benchmark proves nothing",
    "is this {} flag documented anywhere?",
    "I tried the {} workaround and it works",
    "not sure the {} approach scales",
    "thanks for the {} explanation",
    "can you share the {} stack trace?",
    "this thread is {}",
    "you wrote a {} comment in the header",
    "the {} branch is out of date",
];

/// Neutral slot fillers for clean comments.
pub const CLEAN_FILLERS: &[&str] = &[
    "new", "quick", "small", "detailed", "helpful", "old", "careful", "thorough", "simple",
    "strange", "latest", "first", "long", "short", "clear", "generic", "custom", "default",
    "nightly", "legacy", "minimal", "verbose", "flaky", "draft", "final", "second", "partial",
    "upstream", "local", "remote", "async", "cached", "typed", "shared", "beta",
];

/// A lexicon term that the rule set recognizes, with the classes it gets.
#[derive(Debug, Clone, PartialEq)]
pub struct OffensiveTerm {
    pub term: String,
    pub weight: f64,
    pub classes: ClassSet,
}

/// Lexicon terms with weight ≥ `min_weight` that hit at least one rule on
/// their own, in term order.
pub fn offensive_terms(
    rules: &RuleSet,
    lexicon: &ToxicityLexicon,
    min_weight: f64,
) -> Vec<OffensiveTerm> {
    let opts = NormalizeOptions::default();
    lexicon
        .iter()
        .filter(|&(_, w)| w >= min_weight)
        .filter_map(|(term, weight)| {
            let norm = normalize(term, &opts).ok()?;
            let classes = classes_of(&rules.scan(&norm));
            (!classes.is_empty()).then(|| OffensiveTerm {
                term: term.to_string(),
                weight,
                classes,
            })
        })
        .collect()
}

/// Seeded comment generator.
#[derive(Debug, Clone)]
pub struct Synth {
    rng: ChaCha8Rng,
    terms: Vec<OffensiveTerm>,
    rules: Arc<RuleSet>,
    table: Arc<SubstitutionTable>,
    /// Chance that an offensive filler is symbol-obfuscated.
    pub obfuscation: f64,
    /// Chance that an offensive filler is upper-cased.
    pub shouting: f64,
}

impl Synth {
    pub fn new(rules: Arc<RuleSet>, lexicon: &ToxicityLexicon, min_weight: f64, seed: u64) -> Self {
        let terms = offensive_terms(&rules, lexicon, min_weight);
        assert!(
            !terms.is_empty(),
            "no rule-covered lexicon terms at weight {min_weight}"
        );
        Synth {
            rng: ChaCha8Rng::seed_from_u64(seed),
            terms,
            rules,
            table: SubstitutionTable::builtin(),
            obfuscation: 0.0,
            shouting: 0.0,
        }
    }

    pub fn builtin(min_weight: f64, seed: u64) -> Self {
        Synth::new(
            RuleSet::builtin(),
            &ToxicityLexicon::builtin(),
            min_weight,
            seed,
        )
    }

    pub fn terms(&self) -> &[OffensiveTerm] {
        &self.terms
    }

    fn carrier(&mut self) -> &'static str {
        CARRIERS.choose(&mut self.rng).expect("carriers")
    }

    fn fill(carrier: &str, filler: &str) -> String {
        let s = carrier.replacen(SLOT, filler, 1);
        let mut chars = s.chars();
        match chars.next() {
            Some(c) if carrier.starts_with(SLOT) => c.to_uppercase().chain(chars).collect(),
            _ => s,
        }
    }

    /// Replace letters with substitution sources; falls back to the plain
    /// term when the result no longer hits the same rules.
    fn obfuscate(&mut self, term: &str, classes: &ClassSet) -> String {
        let chars: Vec<char> = term.chars().collect();
        let mut out = String::with_capacity(term.len());
        for (i, &c) in chars.iter().enumerate() {
            let last = i + 1 == chars.len();
            let sources: Vec<char> = self
                .table
                .sources_of(c)
                .filter(|&s| !(last && s == '!'))
                .collect();
            if !sources.is_empty() && self.rng.random_bool(0.5) {
                out.push(*sources.choose(&mut self.rng).expect("nonempty"));
            } else {
                out.push(c);
            }
        }
        let ok = normalize(&out, &NormalizeOptions::default())
            .map(|n| &classes_of(&self.rules.scan(&n)) == classes)
            .unwrap_or(false);
        if ok {
            out
        } else {
            term.to_string()
        }
    }

    fn surface(&mut self, t: &OffensiveTerm) -> String {
        let mut s = if self.rng.random_bool(self.obfuscation) {
            let classes = t.classes.clone();
            self.obfuscate(&t.term, &classes)
        } else {
            t.term.clone()
        };
        if self.rng.random_bool(self.shouting) {
            s = s.to_uppercase();
        }
        s
    }

    pub fn clean_comment(&mut self) -> String {
        let carrier = self.carrier();
        let filler = CLEAN_FILLERS.choose(&mut self.rng).expect("fillers");
        Self::fill(carrier, filler)
    }

    pub fn offensive_comment(&mut self) -> (String, ClassSet) {
        let idx = self.rng.random_range(0..self.terms.len());
        self.offensive_with(idx)
    }

    /// Offensive comment built around a term carrying `class`.
    pub fn offensive_for(&mut self, class: OffenceClass) -> (String, ClassSet) {
        let pool: Vec<usize> = (0..self.terms.len())
            .filter(|&i| self.terms[i].classes.contains(&class))
            .collect();
        match pool.choose(&mut self.rng) {
            Some(&i) => self.offensive_with(i),
            None => self.offensive_comment(),
        }
    }

    fn offensive_with(&mut self, idx: usize) -> (String, ClassSet) {
        let term = self.terms[idx].clone();
        let carrier = self.carrier();
        let filler = self.surface(&term);
        (Self::fill(carrier, &filler), term.classes)
    }
}

/// Balanced offensive and clean training texts, `n` of each. Offensive texts
/// cycle through the three classes so every class has positives.
pub fn training_seed(n: usize, seed: u64) -> (Vec<LabelledDoc>, Vec<String>) {
    let mut synth = Synth::builtin(0.0, seed);
    synth.obfuscation = 0.2;
    synth.shouting = 0.05;
    let offensive = (0..n)
        .map(|i| {
            let (text, classes) = synth.offensive_for(OffenceClass::ALL[i % 3]);
            LabelledDoc::offensive(text, classes)
        })
        .collect();
    let clean = (0..n).map(|_| synth.clean_comment()).collect();
    (offensive, clean)
}

/// A corpus of `total` comments of which `n_offensive`, at seeded positions,
/// are built from terms with lexicon weight ≥ `min_weight`.
#[derive(Debug, Clone)]
pub struct SeededCorpus {
    pub records: Vec<RawComment>,
    pub offensive_ids: BTreeSet<String>,
}

pub fn seeded_corpus(total: usize, n_offensive: usize, min_weight: f64, seed: u64) -> SeededCorpus {
    assert!(n_offensive <= total);
    let mut synth = Synth::builtin(min_weight, seed);
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let positions: BTreeSet<usize> = rand::seq::index::sample(&mut pick, total, n_offensive)
        .into_iter()
        .collect();
    let mut offensive_ids = BTreeSet::new();
    let records = (0..total)
        .map(|i| {
            let id = format!("c{i:06}");
            let body = if positions.contains(&i) {
                offensive_ids.insert(id.clone());
                synth.offensive_comment().0
            } else {
                synth.clean_comment()
            };
            RawComment {
                platform: "synthetic".into(),
                id,
                created_at: format!("2021-11-{:02}T12:00:00Z", 1 + i % 30),
                body,
            }
        })
        .collect();
    SeededCorpus {
        records,
        offensive_ids,
    }
}
