//! Building an [`EngineContext`] from artifact files on disk.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data;
use crate::ml::{load_model, LinearModel, ModelArtifact, MultiLabelModel, Vocabulary};
use crate::normalize::NormalizeOptions;
use crate::paraphrase::{MilderThesaurus, ParaphraseContext, RewriterClient};
use crate::pipeline::{EngineContext, Mode, Versions};
use crate::rules::RuleSet;
use crate::scoring::{Scorer, ScorerConfig, ToxicityLexicon};
use crate::sentiment::ValenceLexicon;

/// Header carrying the remote scorer key.
pub const API_KEY_HEADER: &str = "x-api-key";

/// Optional artifact overrides. Anything left `None` falls back to the
/// shipped data; the two model paths must be given together.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactPaths {
    pub ruleset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub multilabel_model: Option<PathBuf>,
    pub toxicity_lexicon: Option<PathBuf>,
    pub valence_lexicon: Option<PathBuf>,
    pub thesaurus: Option<PathBuf>,
}

impl ArtifactPaths {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Path)> {
        [
            ("ruleset", &self.ruleset),
            ("model", &self.model),
            ("multilabel_model", &self.multilabel_model),
            ("toxicity_lexicon", &self.toxicity_lexicon),
            ("valence_lexicon", &self.valence_lexicon),
            ("thesaurus", &self.thesaurus),
        ]
        .into_iter()
        .filter_map(|(name, p)| p.as_deref().map(|p| (name, p)))
    }
}

/// Remote collaborators. Both are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub scorer_url: Option<String>,
    pub scorer_key: Option<String>,
    pub rewriter_url: Option<String>,
    pub timeout_ms: u64,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        RemoteSettings {
            scorer_url: None,
            scorer_key: None,
            rewriter_url: None,
            timeout_ms: 2_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{name} artifact {path}: {reason}")]
    Load {
        name: &'static str,
        path: PathBuf,
        reason: String,
    },
    #[error("{0}")]
    Inconsistent(String),
}

fn read(name: &'static str, path: &Path) -> Result<String, ArtifactError> {
    std::fs::read_to_string(path).map_err(|e| ArtifactError::Load {
        name,
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn bad(name: &'static str, path: &Path, e: impl ToString) -> ArtifactError {
    ArtifactError::Load {
        name,
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn load_pair(
    model: &Path,
    multilabel: &Path,
) -> Result<(Vocabulary, LinearModel, MultiLabelModel), ArtifactError> {
    let open = |name: &'static str, p: &Path| {
        let text = read(name, p)?;
        load_model(text.as_bytes()).map_err(|e| bad(name, p, e))
    };
    let (vocab, binary) = match open("model", model)? {
        ModelArtifact::Binary { vocab, model } => (vocab, model),
        other => {
            return Err(bad(
                "model",
                model,
                format!("expected a binary model, found {}", other.kind()),
            ))
        }
    };
    let (mvocab, multi) = match open("multilabel_model", multilabel)? {
        ModelArtifact::MultiLabel { vocab, model } => (vocab, model),
        other => {
            return Err(bad(
                "multilabel_model",
                multilabel,
                format!("expected a multilabel model, found {}", other.kind()),
            ))
        }
    };
    if vocab != mvocab {
        return Err(ArtifactError::Inconsistent(
            "binary and multi-label models were trained on different vocabularies".into(),
        ));
    }
    Ok((vocab, binary, multi))
}

impl EngineContext {
    /// Load every configured artifact, falling back to the shipped data for
    /// the rest. Fails on the first unreadable or invalid file.
    pub fn load(
        paths: &ArtifactPaths,
        remote: &RemoteSettings,
        mode: Mode,
    ) -> Result<EngineContext, ArtifactError> {
        let options = NormalizeOptions::default();
        let mut ctx = match (&paths.model, &paths.multilabel_model) {
            (None, None) => {
                EngineContext::builtin().map_err(|e| ArtifactError::Inconsistent(e.to_string()))?
            }
            (Some(m), Some(ml)) => {
                let (vocab, binary, multi) = load_pair(m, ml)?;
                let mut ctx = EngineContext::builtin_data();
                ctx.versions.model = binary.trained_on.clone();
                ctx.vocab = Arc::new(vocab);
                ctx.binary = Some(binary);
                ctx.multilabel = Some(multi);
                ctx
            }
            _ => {
                return Err(ArtifactError::Inconsistent(
                    "model and multilabel_model must be configured together".into(),
                ))
            }
        };

        if let Some(p) = &paths.ruleset {
            let rules =
                RuleSet::from_json(&read("ruleset", p)?).map_err(|e| bad("ruleset", p, e))?;
            ctx.versions.ruleset = rules.version().to_string();
            ctx.rules = Arc::new(rules);
        }
        let scorer_cfg = ScorerConfig {
            remote_endpoint: remote.scorer_url.clone().filter(|u| !u.is_empty()),
            remote_api_key: remote
                .scorer_key
                .clone()
                .map(|k| (API_KEY_HEADER.to_string(), k)),
            remote_timeout: Duration::from_millis(remote.timeout_ms),
            ..ScorerConfig::default()
        };
        let lexicon = match &paths.toxicity_lexicon {
            Some(p) => {
                let text = read("toxicity_lexicon", p)?;
                ctx.versions.toxicity_lexicon = digest(&text);
                Arc::new(ToxicityLexicon::parse(&text).map_err(|e| bad("toxicity_lexicon", p, e))?)
            }
            None => ctx.scorer.lexicon.clone(),
        };
        ctx.scorer = Scorer::new(lexicon, scorer_cfg)
            .map_err(|e| ArtifactError::Inconsistent(e.to_string()))?;
        if let Some(p) = &paths.valence_lexicon {
            let text = read("valence_lexicon", p)?;
            ctx.versions.valence_lexicon = digest(&text);
            ctx.valence = Arc::new(
                ValenceLexicon::parse(&text, data::BOOSTERS_TSV, data::NEGATORS_TXT)
                    .map_err(|e| bad("valence_lexicon", p, e))?,
            );
        }
        let thesaurus = match &paths.thesaurus {
            Some(p) => {
                let text = read("thesaurus", p)?;
                ctx.versions.milder_thesaurus = digest(&text);
                MilderThesaurus::parse(&text, &ctx.rules, &options)
                    .map_err(|e| bad("thesaurus", p, e))?
            }
            None => {
                MilderThesaurus::parse(data::MILDER_TSV, &ctx.rules, &options).map_err(|e| {
                    ArtifactError::Inconsistent(format!("shipped thesaurus vs ruleset: {e}"))
                })?
            }
        };
        ctx.paraphrase = ParaphraseContext {
            rules: ctx.rules.clone(),
            thesaurus: Arc::new(thesaurus),
            options: options.clone(),
            rewriter: remote
                .rewriter_url
                .as_deref()
                .filter(|u| !u.is_empty())
                .map(|u| RewriterClient::new(u, Duration::from_millis(remote.timeout_ms))),
        };
        ctx.options = options;
        ctx.mode = mode;
        ctx.validate()
            .map_err(|e| ArtifactError::Inconsistent(e.to_string()))?;
        Ok(ctx)
    }
}

impl Versions {
    pub(crate) fn builtin(ruleset: &str, model: &str) -> Versions {
        Versions {
            engine: env!("CARGO_PKG_VERSION").to_string(),
            ruleset: ruleset.to_string(),
            toxicity_lexicon: "builtin".into(),
            valence_lexicon: "builtin".into(),
            model: model.to_string(),
            milder_thesaurus: "builtin".into(),
        }
    }
}
