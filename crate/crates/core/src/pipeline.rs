//! The four-phase analysis: detect, classify, highlight, paraphrase.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ml::{
    fit_tfidf, predict, predict_classes, train_binary_report, train_multilabel, CorpusBuilder,
    Example, FeatureVector, Featurizer, LabelledDoc, LinearModel, MlError, MultiLabelModel,
    TrainConfig, Vocabulary, DEFAULT_MIN_DF,
};
use crate::normalize::{
    normalize, normalize_bytes, NormalizeError, NormalizeOptions, NormalizedText,
};
use crate::paraphrase::{
    paraphrase_deletion, paraphrase_mask, suggest, ParaphraseContext, ParaphraseSuggestion,
};
use crate::rules::{classes_of, RuleMatch, RuleSet, Severity};
use crate::scoring::{Band, Scorer, ScorerConfig, ToxicityLexicon, ToxicityScore};
use crate::sentiment::{analyze_sentiment, SentimentResult, ValenceLexicon};
use crate::synth::training_seed;
use crate::{ClassSet, Span};

/// Detection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Offensive iff a rule hits and the score is in the offensive band.
    Strict,
    /// Offensive iff a rule hits, or the score is in the offensive band, or
    /// the classifier says so.
    #[default]
    Sensitive,
}

impl FromStr for Mode {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, EngineError> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(Mode::Strict),
            "sensitive" => Ok(Mode::Sensitive),
            _ => Err(EngineError::InvalidMode(s.to_string())),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strict => "strict",
            Mode::Sensitive => "sensitive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Clean,
    Offensive,
}

impl Verdict {
    pub fn is_offensive(self) -> bool {
        self == Verdict::Offensive
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("engine not ready: {0}")]
    EngineNotReady(String),
    #[error("input is {len} bytes; the limit is {max}")]
    InputTooLarge { len: usize, max: usize },
    #[error("input is not valid UTF-8 (valid up to byte {valid_up_to})")]
    InvalidEncoding { valid_up_to: usize },
    #[error("unknown mode {0:?}; expected strict or sensitive")]
    InvalidMode(String),
    #[error("training failed: {0}")]
    Training(#[from] MlError),
}

impl From<NormalizeError> for EngineError {
    fn from(e: NormalizeError) -> Self {
        match e {
            NormalizeError::InputTooLarge { len, max } => EngineError::InputTooLarge { len, max },
            NormalizeError::InvalidEncoding { valid_up_to } => {
                EngineError::InvalidEncoding { valid_up_to }
            }
        }
    }
}

/// Identifiers of the artifacts a report was produced with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub engine: String,
    pub ruleset: String,
    pub toxicity_lexicon: String,
    pub valence_lexicon: String,
    pub model: String,
    pub milder_thesaurus: String,
}

/// Wall-clock milliseconds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub detect: f64,
    pub classify: f64,
    pub highlight: f64,
    pub paraphrase: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.detect + self.classify + self.highlight + self.paraphrase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    pub label: bool,
    pub margin: f64,
}

/// Phases 1 to 3 without suggestions; what corpus scans need.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub verdict: Verdict,
    pub classes: ClassSet,
    pub score: ToxicityScore,
    pub band: Band,
    pub matches: Vec<RuleMatch>,
    pub sentiment: SentimentResult,
    pub classifier: ClassifierOutput,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub verdict: Verdict,
    pub mode: Mode,
    pub classes: ClassSet,
    pub score: ToxicityScore,
    pub band: Band,
    pub matches: Vec<RuleMatch>,
    pub sentiment: SentimentResult,
    pub classifier: ClassifierOutput,
    pub suggestions: Vec<ParaphraseSuggestion>,
    pub versions: Versions,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Kept out of the serialized body so identical requests give identical
    /// bytes; the service sends it as a header.
    #[serde(skip)]
    pub timing_ms: PhaseTimings,
}

/// Everything an analysis needs. Immutable once built.
#[derive(Debug, Clone)]
pub struct EngineContext {
    pub rules: Arc<RuleSet>,
    pub scorer: Scorer,
    pub valence: Arc<ValenceLexicon>,
    pub vocab: Arc<Vocabulary>,
    pub binary: Option<LinearModel>,
    pub multilabel: Option<MultiLabelModel>,
    pub paraphrase: ParaphraseContext,
    pub options: NormalizeOptions,
    pub mode: Mode,
    pub versions: Versions,
}

/// Models trained from a labelled corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub vocab: Vocabulary,
    pub binary: LinearModel,
    pub multilabel: MultiLabelModel,
    pub epoch_losses: Vec<f64>,
}

/// Featurize a labelled corpus against a fitted vocabulary.
pub fn featurize(
    docs: &[LabelledDoc],
    featurizer: &Featurizer,
    opts: &NormalizeOptions,
) -> Result<Vec<Example>, MlError> {
    docs.iter()
        .map(|d| {
            let norm = normalize(&d.text, opts).map_err(|e| MlError::InvalidText(e.to_string()))?;
            Ok(Example {
                features: featurizer.features(&norm),
                label: d.label,
                classes: d.classes.clone(),
            })
        })
        .collect()
}

/// Fit the vocabulary on `docs` and featurize them against it.
pub fn prepare_examples(
    docs: &[LabelledDoc],
    rules: Arc<RuleSet>,
    valence: Arc<ValenceLexicon>,
    opts: &NormalizeOptions,
) -> Result<(Vocabulary, Vec<Example>), MlError> {
    let norms = docs
        .iter()
        .map(|d| normalize(&d.text, opts).map_err(|e| MlError::InvalidText(e.to_string())))
        .collect::<Result<Vec<NormalizedText>, _>>()?;
    let vocab = Arc::new(fit_tfidf(&norms, DEFAULT_MIN_DF)?);
    let featurizer = Featurizer::new(vocab.clone(), rules, valence);
    let examples = featurize(docs, &featurizer, opts)?;
    drop(featurizer);
    Ok((Arc::unwrap_or_clone(vocab), examples))
}

/// Fit the vocabulary on `docs`, then train the binary model on all of them
/// and the one-vs-rest models on the offensive ones.
pub fn train_models(
    docs: &[LabelledDoc],
    rules: Arc<RuleSet>,
    valence: Arc<ValenceLexicon>,
    opts: &NormalizeOptions,
    cfg: &TrainConfig,
) -> Result<TrainedModels, MlError> {
    let (vocab, examples) = prepare_examples(docs, rules, valence, opts)?;
    let report = train_binary_report(&examples, cfg)?;
    let offensive: Vec<Example> = examples.into_iter().filter(|e| e.label).collect();
    let multilabel = train_multilabel(&offensive, cfg)?;
    Ok(TrainedModels {
        vocab,
        binary: report.model,
        multilabel,
        epoch_losses: report.epoch_losses,
    })
}

/// Offensive and clean seed texts (each) behind the builtin models.
pub const BUILTIN_SEED_SIZE: usize = 600;
pub const BUILTIN_SEED: u64 = 20_211_101;

fn builtin_models() -> Result<Arc<TrainedModels>, MlError> {
    static MODELS: OnceLock<Result<Arc<TrainedModels>, MlError>> = OnceLock::new();
    MODELS
        .get_or_init(|| {
            let (offensive, clean) = training_seed(BUILTIN_SEED_SIZE, BUILTIN_SEED);
            let docs = CorpusBuilder::builtin().build(&offensive, &clean, BUILTIN_SEED)?;
            let cfg = TrainConfig {
                seed: BUILTIN_SEED,
                ..TrainConfig::default()
            };
            train_models(
                &docs,
                RuleSet::builtin(),
                ValenceLexicon::builtin(),
                &NormalizeOptions::default(),
                &cfg,
            )
            .map(Arc::new)
        })
        .clone()
}

impl EngineContext {
    /// Shipped data files plus models trained in-process from the synthetic
    /// seed corpus. Training runs once per process.
    pub fn builtin() -> Result<EngineContext, EngineError> {
        let models = builtin_models()?;
        let mut ctx = EngineContext::builtin_data();
        ctx.versions.model = models.binary.trained_on.clone();
        ctx.vocab = Arc::new(models.vocab.clone());
        ctx.binary = Some(models.binary.clone());
        ctx.multilabel = Some(models.multilabel.clone());
        Ok(ctx)
    }

    /// Shipped data files with no models loaded.
    pub fn builtin_data() -> EngineContext {
        let rules = RuleSet::builtin();
        EngineContext {
            scorer: Scorer::new(ToxicityLexicon::builtin(), ScorerConfig::default())
                .expect("default scorer config is valid"),
            valence: ValenceLexicon::builtin(),
            vocab: Arc::new(
                Vocabulary::from_parts(Vec::new(), Vec::new(), 0)
                    .expect("empty vocabulary is valid"),
            ),
            binary: None,
            multilabel: None,
            paraphrase: ParaphraseContext::builtin(),
            options: NormalizeOptions::default(),
            mode: Mode::default(),
            versions: Versions::builtin(rules.version(), "none"),
            rules,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let dim = self.vocab.dim();
        let binary = self
            .binary
            .as_ref()
            .ok_or_else(|| EngineError::EngineNotReady("binary model not loaded".into()))?;
        let multi = self
            .multilabel
            .as_ref()
            .ok_or_else(|| EngineError::EngineNotReady("multi-label model not loaded".into()))?;
        if binary.dim() != dim || multi.dim() != dim {
            return Err(EngineError::EngineNotReady(format!(
                "model dimension {} / {} does not match vocabulary dimension {dim}",
                binary.dim(),
                multi.dim()
            )));
        }
        Ok(())
    }
}

/// A validated, shareable analysis engine.
#[derive(Debug, Clone)]
pub struct Engine {
    ctx: Arc<EngineContext>,
    featurizer: Featurizer,
}

impl Engine {
    pub fn new(ctx: EngineContext) -> Result<Engine, EngineError> {
        ctx.validate()?;
        let featurizer = Featurizer::new(ctx.vocab.clone(), ctx.rules.clone(), ctx.valence.clone());
        Ok(Engine {
            ctx: Arc::new(ctx),
            featurizer,
        })
    }

    pub fn builtin() -> Result<Engine, EngineError> {
        Engine::new(EngineContext::builtin()?)
    }

    pub fn context(&self) -> &EngineContext {
        &self.ctx
    }

    pub fn mode(&self) -> Mode {
        self.ctx.mode
    }

    fn binary(&self) -> &LinearModel {
        self.ctx.binary.as_ref().expect("validated")
    }

    fn multilabel(&self) -> &MultiLabelModel {
        self.ctx.multilabel.as_ref().expect("validated")
    }

    pub fn features(&self, norm: &NormalizedText) -> FeatureVector {
        self.featurizer.features(norm)
    }

    fn detect_norm(&self, norm: &NormalizedText, mode: Mode) -> (Detection, PhaseTimings) {
        let mut timing = PhaseTimings::default();
        let t0 = Instant::now();
        let matches = self.ctx.rules.scan(norm);
        let (score, remote_error) = self.ctx.scorer.score(norm);
        let band = self.ctx.scorer.band(&score);
        let sentiment = analyze_sentiment(norm, &self.ctx.valence);
        let fv = crate::ml::vectorize(&self.ctx.vocab, norm, !matches.is_empty(), &sentiment);
        let (label, margin) = predict(self.binary(), &fv).expect("validated dimension");
        let has_rule = !matches.is_empty();
        let high = band == Band::OffensiveCandidate;
        let offensive = match mode {
            Mode::Strict => has_rule && high,
            Mode::Sensitive => has_rule || high || label,
        };
        timing.detect = ms(t0);

        let t1 = Instant::now();
        let classes = if !offensive {
            ClassSet::new()
        } else if has_rule {
            classes_of(&matches)
        } else {
            predict_classes(self.multilabel(), &fv).expect("validated dimension")
        };
        timing.classify = ms(t1);

        let detection = Detection {
            verdict: if offensive {
                Verdict::Offensive
            } else {
                Verdict::Clean
            },
            classes,
            score,
            band,
            matches,
            sentiment,
            classifier: ClassifierOutput { label, margin },
            warnings: remote_error
                .map(|e| vec![format!("remote scorer failed, local score used: {e}")])
                .unwrap_or_default(),
        };
        (detection, timing)
    }

    /// Phases 1 and 2 only.
    pub fn detect(&self, body: &str, mode: Mode) -> Result<Detection, EngineError> {
        let norm = normalize(body, &self.ctx.options)?;
        Ok(self.detect_norm(&norm, mode).0)
    }

    pub fn analyze(&self, body: &str) -> Result<AnalysisReport, EngineError> {
        self.analyze_with(body, self.ctx.mode)
    }

    pub fn analyze_bytes(&self, body: &[u8], mode: Mode) -> Result<AnalysisReport, EngineError> {
        let norm = normalize_bytes(body, &self.ctx.options)?;
        Ok(self.analyze_norm(&norm, mode))
    }

    pub fn analyze_with(&self, body: &str, mode: Mode) -> Result<AnalysisReport, EngineError> {
        let norm = normalize(body, &self.ctx.options)?;
        Ok(self.analyze_norm(&norm, mode))
    }

    fn analyze_norm(&self, norm: &NormalizedText, mode: Mode) -> AnalysisReport {
        let (d, mut timing) = self.detect_norm(norm, mode);

        let t2 = Instant::now();
        // Spans are already validated by the scanner; highlights are the
        // matches themselves.
        timing.highlight = ms(t2);

        let t3 = Instant::now();
        let suggestions = if d.verdict.is_offensive() {
            self.suggestions(norm, &d)
        } else {
            Vec::new()
        };
        timing.paraphrase = ms(t3);

        AnalysisReport {
            verdict: d.verdict,
            mode,
            classes: d.classes,
            score: d.score,
            band: d.band,
            matches: d.matches,
            sentiment: d.sentiment,
            classifier: d.classifier,
            suggestions,
            versions: self.ctx.versions.clone(),
            warnings: d.warnings,
            timing_ms: timing,
        }
    }

    fn suggestions(&self, norm: &NormalizedText, d: &Detection) -> Vec<ParaphraseSuggestion> {
        let ctx = &self.ctx.paraphrase;
        if !d.matches.is_empty() {
            return suggest(norm, &d.matches, ctx).expect("matches are nonempty");
        }
        // Span-less offence: work on the tokens of the contributing lexicon
        // terms instead of rule hits.
        let terms: Vec<&str> = d
            .score
            .contributions
            .iter()
            .map(|c| c.term.as_str())
            .collect();
        let pseudo: Vec<RuleMatch> = norm
            .word_tokens()
            .filter(|t| terms.contains(&t.surface.as_str()))
            .map(|t| RuleMatch {
                rule_id: format!("lexicon:{}", t.surface),
                span: t.span(),
                surface: norm.original_surface(t).to_string(),
                classes: ClassSet::new(),
                severity: Severity::Mild,
            })
            .collect();
        let mut out = if pseudo.is_empty() {
            let same = ParaphraseSuggestion {
                strategy: crate::paraphrase::Strategy::Deletion,
                text: norm.original().to_string(),
                changed_spans: Vec::new(),
                fallback: true,
                duplicate: false,
            };
            vec![same.clone(), same.clone(), same]
        } else {
            let deletion = ParaphraseSuggestion {
                fallback: true,
                ..paraphrase_deletion(norm, &pseudo, ctx)
            };
            vec![
                deletion.clone(),
                paraphrase_mask(norm, &pseudo, ctx),
                deletion,
            ]
        };
        out[1].strategy = crate::paraphrase::Strategy::Mask;
        for i in 1..out.len() {
            out[i].duplicate = out[..i].iter().any(|s| s.text == out[i].text);
        }
        out
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// How highlights are drawn in plain text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Marker {
    /// `⟦surface|Class1,Class2⟧`
    #[default]
    Brackets,
    /// Underlined for terminals.
    Ansi,
}

/// A merged highlight: union span and union classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Highlight {
    pub span: Span,
    pub classes: ClassSet,
}

/// Merge overlapping match spans, uniting their classes.
pub fn merge_highlights(matches: &[RuleMatch]) -> Vec<Highlight> {
    let mut sorted: Vec<&RuleMatch> = matches.iter().collect();
    sorted.sort_by_key(|m| (m.span.start, m.span.end));
    let mut out: Vec<Highlight> = Vec::new();
    for m in sorted {
        match out.last_mut() {
            Some(h) if m.span.start < h.span.end => {
                h.span.end = h.span.end.max(m.span.end);
                h.classes.extend(m.classes.iter().copied());
            }
            _ => out.push(Highlight {
                span: m.span,
                classes: m.classes.clone(),
            }),
        }
    }
    out
}

pub fn class_list(classes: &ClassSet) -> String {
    classes
        .iter()
        .map(|c| c.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn render_highlights(body: &str, matches: &[RuleMatch], marker: Marker) -> String {
    let mut out = String::with_capacity(body.len() + 16 * matches.len());
    let mut pos = 0;
    for h in merge_highlights(matches) {
        out.push_str(&body[pos..h.span.start]);
        let surface = h.span.slice(body);
        match marker {
            Marker::Brackets => {
                out.push('⟦');
                out.push_str(surface);
                out.push('|');
                out.push_str(&class_list(&h.classes));
                out.push('⟧');
            }
            Marker::Ansi => {
                out.push_str("\x1b[4m");
                out.push_str(surface);
                out.push_str("\x1b[24m");
            }
        }
        pos = h.span.end;
    }
    out.push_str(&body[pos..]);
    out
}
