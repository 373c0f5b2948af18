//! Toxicity scores in `[0, 1]`.
//!
//! The local scorer looks up word tokens of the folded text in a weighted
//! lexicon and combines the distinct hits with a noisy-or,
//! `1 - prod(1 - w_i)`. An optional remote scorer speaks a one-field JSON
//! protocol; [`Scorer`] tries it first and falls back to the local scorer on
//! any failure.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data;
use crate::http::{HttpError, JsonClient};
use crate::lexicon::{parse_weighted, DataError};
use crate::normalize::NormalizedText;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityScore {
    pub value: f64,
    pub source: ScoreSource,
    /// Lexicon terms behind a local score, sorted by term.
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Clean,
    Gray,
    OffensiveCandidate,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("remote scorer unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote scorer returned a malformed response: {0}")]
    RemoteMalformed(String),
    #[error("invalid scorer configuration: {0}")]
    InvalidConfig(String),
}

impl From<HttpError> for ScoreError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Unavailable(m) => ScoreError::RemoteUnavailable(m),
            HttpError::Malformed(m) => ScoreError::RemoteMalformed(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerConfig {
    pub offensive_threshold: f64,
    pub clean_threshold: f64,
    pub remote_endpoint: Option<String>,
    /// Header name and value sent with every remote request.
    pub remote_api_key: Option<(String, String)>,
    pub remote_timeout: Duration,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            offensive_threshold: 0.7,
            clean_threshold: 0.05,
            remote_endpoint: None,
            remote_api_key: None,
            remote_timeout: Duration::from_secs(2),
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let (c, o) = (self.clean_threshold, self.offensive_threshold);
        if !(0.0 <= c && c < o && o <= 1.0) {
            return Err(ScoreError::InvalidConfig(format!(
                "need 0 <= clean ({c}) < offensive ({o}) <= 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToxicityLexicon {
    entries: BTreeMap<String, f64>,
}

impl ToxicityLexicon {
    pub fn parse(src: &str) -> Result<Self, DataError> {
        const FILE: &str = "toxicity lexicon";
        let entries = parse_weighted(FILE, src)?;
        for (term, &w) in &entries {
            if term.to_lowercase() != *term || term.chars().any(char::is_whitespace) {
                return Err(DataError::new(
                    FILE,
                    0,
                    format!("{term:?} is not a lowercase single word"),
                ));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(DataError::new(
                    FILE,
                    0,
                    format!("weight of {term:?} outside (0, 1]"),
                ));
            }
        }
        Ok(ToxicityLexicon { entries })
    }

    pub fn builtin() -> Arc<ToxicityLexicon> {
        static LEX: OnceLock<Arc<ToxicityLexicon>> = OnceLock::new();
        LEX.get_or_init(|| {
            Arc::new(ToxicityLexicon::parse(data::TOXICITY_TSV).expect("builtin lexicon"))
        })
        .clone()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        ToxicityLexicon {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn weight(&self, term: &str) -> Option<f64> {
        self.entries.get(term).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(t, &w)| (t.as_str(), w))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Noisy-or over weights. Callers pass weights in a fixed order so the
/// floating-point result does not depend on input order.
pub fn noisy_or(weights: impl IntoIterator<Item = f64>) -> f64 {
    let keep: f64 = weights.into_iter().map(|w| 1.0 - w).product();
    (1.0 - keep).clamp(0.0, 1.0)
}

pub fn score_local(norm: &NormalizedText, lex: &ToxicityLexicon) -> ToxicityScore {
    let hits: BTreeMap<&str, f64> = norm
        .word_tokens()
        .filter_map(|t| lex.weight(&t.surface).map(|w| (t.surface.as_str(), w)))
        .collect();
    let value = noisy_or(hits.values().copied());
    ToxicityScore {
        value,
        source: ScoreSource::Local,
        contributions: hits
            .into_iter()
            .map(|(term, weight)| Contribution {
                term: term.to_string(),
                weight,
            })
            .collect(),
    }
}

pub fn band(score: &ToxicityScore, cfg: &ScorerConfig) -> Band {
    if score.value <= cfg.clean_threshold {
        Band::Clean
    } else if score.value >= cfg.offensive_threshold {
        Band::OffensiveCandidate
    } else {
        Band::Gray
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

/// Client for a remote `{"text"} -> {"score"}` toxicity endpoint.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: JsonClient,
}

impl RemoteScorer {
    pub fn new(cfg: &ScorerConfig) -> Result<Self, ScoreError> {
        let url = cfg
            .remote_endpoint
            .as_deref()
            .ok_or_else(|| ScoreError::InvalidConfig("no remote endpoint configured".into()))?;
        let headers = cfg.remote_api_key.iter().cloned().collect();
        Ok(RemoteScorer {
            client: JsonClient::new(url, cfg.remote_timeout, headers),
        })
    }

    pub fn endpoint(&self) -> &str {
        self.client.url()
    }

    pub fn score(&self, body: &str) -> Result<ToxicityScore, ScoreError> {
        let resp: ScoreResponse = self.client.post(&ScoreRequest { text: body })?;
        if !resp.score.is_finite() {
            return Err(ScoreError::RemoteMalformed(format!("score {}", resp.score)));
        }
        Ok(ToxicityScore {
            value: resp.score.clamp(0.0, 1.0),
            source: ScoreSource::Remote,
            contributions: Vec::new(),
        })
    }
}

pub fn score_remote(body: &str, cfg: &ScorerConfig) -> Result<ToxicityScore, ScoreError> {
    RemoteScorer::new(cfg)?.score(body)
}

/// Remote-then-local scoring facade. Never fails.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub lexicon: Arc<ToxicityLexicon>,
    pub config: ScorerConfig,
    remote: Option<RemoteScorer>,
}

impl Scorer {
    pub fn new(lexicon: Arc<ToxicityLexicon>, config: ScorerConfig) -> Result<Self, ScoreError> {
        config.validate()?;
        let remote = match config.remote_endpoint {
            Some(_) => Some(RemoteScorer::new(&config)?),
            None => None,
        };
        Ok(Scorer {
            lexicon,
            config,
            remote,
        })
    }

    pub fn local(&self, norm: &NormalizedText) -> ToxicityScore {
        score_local(norm, &self.lexicon)
    }

    /// Remote score when configured and healthy, else the local score. The
    /// second element carries the remote failure, if any.
    pub fn score(&self, norm: &NormalizedText) -> (ToxicityScore, Option<ScoreError>) {
        match &self.remote {
            Some(remote) => match remote.score(norm.original()) {
                Ok(s) => (s, None),
                Err(e) => (self.local(norm), Some(e)),
            },
            None => (self.local(norm), None),
        }
    }

    pub fn band(&self, score: &ToxicityScore) -> Band {
        band(score, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testserver;
    use crate::normalize::{normalize, NormalizeOptions};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn norm(s: &str) -> NormalizedText {
        normalize(s, &NormalizeOptions::default()).unwrap()
    }

    fn lex() -> ToxicityLexicon {
        ToxicityLexicon::from_entries([
            ("foo".to_string(), 0.8),
            ("bar".to_string(), 0.5),
            ("baz".to_string(), 0.9),
        ])
    }

    fn local(v: f64) -> ToxicityScore {
        ToxicityScore {
            value: v,
            source: ScoreSource::Local,
            contributions: vec![],
        }
    }

    #[test]
    fn no_hits_scores_zero() {
        let s = score_local(&norm("nothing here"), &lex());
        assert_eq!(s.value, 0.0);
        assert!(s.contributions.is_empty());
    }

    #[test]
    fn single_hit_is_its_weight() {
        assert_abs_diff_eq!(
            score_local(&norm("a baz"), &lex()).value,
            0.9,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_hits_combine_by_noisy_or() {
        let s = score_local(&norm("foo and bar"), &lex());
        assert_abs_diff_eq!(s.value, 1.0 - 0.2 * 0.5, epsilon = 1e-12);
        assert_eq!(s.contributions.len(), 2);
    }

    #[test]
    fn repeats_count_once() {
        let once = score_local(&norm("foo"), &lex());
        let many = score_local(&norm("foo foo FOO f00"), &lex());
        assert_eq!(once, many);
    }

    #[test]
    fn bands_at_the_thresholds() {
        let cfg = ScorerConfig::default();
        assert_eq!(band(&local(0.7), &cfg), Band::OffensiveCandidate);
        assert_eq!(band(&local(0.05), &cfg), Band::Clean);
        assert_eq!(band(&local(0.3), &cfg), Band::Gray);
        assert_eq!(band(&local(0.0), &cfg), Band::Clean);
        assert_eq!(band(&local(1.0), &cfg), Band::OffensiveCandidate);
    }

    #[test]
    fn config_ordering_is_checked() {
        let mut cfg = ScorerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.clean_threshold = 0.7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn builtin_lexicon_uses_three_tiers() {
        let lex = ToxicityLexicon::builtin();
        assert!(lex.len() > 100);
        for (_, w) in lex.iter() {
            assert!([0.3, 0.6, 0.9].contains(&w), "{w}");
        }
    }

    fn remote_cfg(url: String, timeout_ms: u64) -> ScorerConfig {
        ScorerConfig {
            remote_endpoint: Some(url),
            remote_timeout: Duration::from_millis(timeout_ms),
            ..Default::default()
        }
    }

    #[test]
    fn remote_score_passes_through() {
        let url = testserver::serve(200, r#"{"score": 0.83}"#, Duration::ZERO);
        let s = score_remote("hi", &remote_cfg(url, 2000)).unwrap();
        assert_eq!(s.value, 0.83);
        assert_eq!(s.source, ScoreSource::Remote);
    }

    #[test]
    fn remote_score_is_clamped() {
        let url = testserver::serve(200, r#"{"score": 1.7}"#, Duration::ZERO);
        assert_eq!(
            score_remote("hi", &remote_cfg(url, 2000)).unwrap().value,
            1.0
        );
    }

    #[test]
    fn remote_timeout_is_unavailable() {
        let url = testserver::serve(200, r#"{"score": 0.1}"#, Duration::from_millis(800));
        assert!(matches!(
            score_remote("hi", &remote_cfg(url, 100)),
            Err(ScoreError::RemoteUnavailable(_))
        ));
    }

    #[test]
    fn remote_garbage_is_malformed() {
        let url = testserver::serve(200, r#"{"toxicity": 0.1}"#, Duration::ZERO);
        assert!(matches!(
            score_remote("hi", &remote_cfg(url, 2000)),
            Err(ScoreError::RemoteMalformed(_))
        ));
        let url = testserver::serve(503, "{}", Duration::ZERO);
        assert!(matches!(
            score_remote("hi", &remote_cfg(url, 2000)),
            Err(ScoreError::RemoteUnavailable(_))
        ));
    }

    #[test]
    fn facade_falls_back_to_local() {
        let dead = {
            let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            format!("http://{}/", l.local_addr().unwrap())
        };
        let scorer = Scorer::new(Arc::new(lex()), remote_cfg(dead, 300)).unwrap();
        let (s, err) = scorer.score(&norm("baz"));
        assert_eq!(s.source, ScoreSource::Local);
        assert_abs_diff_eq!(s.value, 0.9, epsilon = 1e-12);
        assert!(err.is_some());
    }

    proptest! {
        #[test]
        fn noisy_or_is_bounded_and_monotone(ws in proptest::collection::vec(0.0001f64..=1.0, 0..20), extra in 0.0001f64..=1.0) {
            let base = noisy_or(ws.iter().copied());
            prop_assert!((0.0..=1.0).contains(&base));
            let more = noisy_or(ws.iter().copied().chain([extra]));
            prop_assert!(more >= base);
        }

        #[test]
        fn token_order_does_not_matter(mut words in proptest::collection::vec(prop::sample::select(vec!["foo", "bar", "baz", "x", "y"]), 0..10), seed in any::<u64>()) {
            let a = score_local(&norm(&words.join(" ")), &lex());
            let n = words.len();
            words.rotate_left((seed as usize) % (n + 1) % n.max(1));
            words.reverse();
            let b = score_local(&norm(&words.join(" ")), &lex());
            prop_assert_eq!(a, b);
        }
    }
}
