//! The three non-offensive rewordings offered for an offensive comment:
//! milder synonyms, `[MASK]` substitution, and an external rewriter with a
//! deletion fallback. Every suggestion is re-scanned and is rule-clean.
//!
//! Replacements are planned over merged match spans and applied to the
//! original text. When the result still hits a rule, the plan is revised:
//! a hit inside one replacement moves that span to its next alternative
//! (then to deletion), any other hit is mapped back to the original text
//! and merged into the span set. This repeats until the text is clean.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data;
use crate::http::{HttpError, JsonClient};
use crate::lexicon::{parse_alternatives, DataError};
use crate::normalize::{normalize, NormalizeOptions, NormalizedText};
use crate::rules::{RuleMatch, RuleSet};
use crate::Span;

pub const MASK_TOKEN: &str = "[MASK]";
pub const SUGGESTION_COUNT: usize = 3;
const MAX_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParaphraseError {
    #[error("rewriter unavailable: {0}")]
    RewriterUnavailable(String),
    #[error("rewriter output still matches rules: {}", .0.join(", "))]
    RewriterUnsafe(Vec<String>),
    #[error("no offence found; nothing to paraphrase")]
    NoOffenceFound,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("milder alternative {alternative:?} for {term:?} matches rule {rule_id}")]
    UnsafeAlternative {
        term: String,
        alternative: String,
        rule_id: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Synonym,
    Mask,
    Rewrite,
    Deletion,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Synonym => "synonym",
            Strategy::Mask => "mask",
            Strategy::Rewrite => "rewrite",
            Strategy::Deletion => "deletion",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An original byte span and the text that replaced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedSpan {
    pub span: Span,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseSuggestion {
    pub strategy: Strategy,
    pub text: String,
    pub changed_spans: Vec<ChangedSpan>,
    /// Set when this slot holds a fallback for the strategy normally there.
    #[serde(default)]
    pub fallback: bool,
    /// Set when an earlier suggestion has the same text.
    #[serde(default)]
    pub duplicate: bool,
}

/// Apply non-overlapping, sorted changes to `original`.
pub fn apply_changes(original: &str, changes: &[ChangedSpan]) -> String {
    let mut out = String::with_capacity(original.len());
    let mut pos = 0;
    for c in changes {
        out.push_str(&original[pos..c.span.start]);
        out.push_str(&c.replacement);
        pos = c.span.end;
    }
    out.push_str(&original[pos..]);
    out
}

/// Offensive term to ordered milder alternatives. No alternative matches the
/// rule set it was validated against.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MilderThesaurus {
    entries: BTreeMap<String, Vec<String>>,
}

impl MilderThesaurus {
    pub fn parse(
        src: &str,
        rules: &RuleSet,
        opts: &NormalizeOptions,
    ) -> Result<Self, ParaphraseError> {
        Self::validated(parse_alternatives("milder thesaurus", src)?, rules, opts)
    }

    pub fn from_entries<I, S>(
        entries: I,
        rules: &RuleSet,
        opts: &NormalizeOptions,
    ) -> Result<Self, ParaphraseError>
    where
        I: IntoIterator<Item = (S, Vec<S>)>,
        S: Into<String>,
    {
        let map = entries
            .into_iter()
            .map(|(k, v)| {
                (
                    k.into().to_lowercase(),
                    v.into_iter().map(Into::into).collect(),
                )
            })
            .collect();
        Self::validated(map, rules, opts)
    }

    fn validated(
        entries: BTreeMap<String, Vec<String>>,
        rules: &RuleSet,
        opts: &NormalizeOptions,
    ) -> Result<Self, ParaphraseError> {
        for (term, alts) in &entries {
            for alt in alts {
                let norm = normalize(alt, opts)
                    .map_err(|e| DataError::new("milder thesaurus", 0, format!("{term:?}: {e}")))?;
                if let Some(m) = rules.scan(&norm).first() {
                    return Err(ParaphraseError::UnsafeAlternative {
                        term: term.clone(),
                        alternative: alt.clone(),
                        rule_id: m.rule_id.clone(),
                    });
                }
            }
        }
        Ok(MilderThesaurus { entries })
    }

    pub fn builtin() -> Arc<MilderThesaurus> {
        static T: OnceLock<Arc<MilderThesaurus>> = OnceLock::new();
        T.get_or_init(|| {
            Arc::new(
                MilderThesaurus::parse(
                    data::MILDER_TSV,
                    &RuleSet::builtin(),
                    &NormalizeOptions::default(),
                )
                .expect("builtin milder thesaurus"),
            )
        })
        .clone()
    }

    pub fn alternatives(&self, term: &str) -> &[String] {
        self.entries.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Client for an external rewriter: POST `{"text"}`, reply `{"rewrite"}`.
#[derive(Debug, Clone)]
pub struct RewriterClient {
    client: JsonClient,
}

#[derive(Serialize)]
struct RewriteRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct RewriteResponse {
    rewrite: String,
}

impl RewriterClient {
    pub fn new(url: &str, timeout: Duration) -> Self {
        RewriterClient {
            client: JsonClient::new(url, timeout, Vec::new()),
        }
    }

    pub fn endpoint(&self) -> &str {
        self.client.url()
    }

    pub fn rewrite(&self, text: &str) -> Result<String, ParaphraseError> {
        self.client
            .post::<_, RewriteResponse>(&RewriteRequest { text })
            .map(|r| r.rewrite)
            .map_err(|e| match e {
                HttpError::Unavailable(m) | HttpError::Malformed(m) => {
                    ParaphraseError::RewriterUnavailable(m)
                }
            })
    }
}

/// Everything the strategies need besides the comment itself.
#[derive(Debug, Clone)]
pub struct ParaphraseContext {
    pub rules: Arc<RuleSet>,
    pub thesaurus: Arc<MilderThesaurus>,
    pub options: NormalizeOptions,
    pub rewriter: Option<RewriterClient>,
}

impl ParaphraseContext {
    pub fn builtin() -> Self {
        ParaphraseContext {
            rules: RuleSet::builtin(),
            thesaurus: MilderThesaurus::builtin(),
            options: NormalizeOptions::default(),
            rewriter: None,
        }
    }

    fn residual(&self, text: &str) -> Vec<RuleMatch> {
        match normalize(text, &self.options) {
            Ok(n) => self.rules.scan(&n),
            // Too large after substitution: report a hit over the whole text.
            Err(_) => vec![RuleMatch {
                rule_id: String::new(),
                span: Span::new(0, text.len()),
                surface: String::new(),
                classes: Default::default(),
                severity: crate::rules::Severity::Mild,
            }],
        }
    }
}

pub(crate) fn match_case(original: &str, replacement: &str) -> String {
    let mut chars = replacement.chars();
    match (original.chars().next(), chars.next()) {
        (Some(o), Some(r)) if o.is_uppercase() => r.to_uppercase().chain(chars).collect(),
        _ => replacement.to_string(),
    }
}

/// Sorted union of spans; touching spans merge.
fn merge_spans(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort();
    let mut out: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Grow a deletion so it takes one side's whitespace with it.
fn deletion_span(text: &str, span: Span, floor: usize) -> Span {
    let before = text[..span.start].chars().next_back();
    let after = text[span.end..].chars().next();
    let after_breaks = after.is_none_or(|c| c.is_whitespace() || !c.is_alphanumeric());
    if before.is_some_and(char::is_whitespace) && after_breaks {
        let trimmed = text[floor..span.start].trim_end().len() + floor;
        return Span::new(trimmed, span.end);
    }
    if span.start == floor && after.is_some_and(char::is_whitespace) {
        let rest = &text[span.end..];
        let end = span.end + (rest.len() - rest.trim_start().len());
        return Span::new(span.start, end);
    }
    span
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plan {
    Synonym,
    Mask,
    Delete,
}

struct Planner<'a> {
    original: &'a str,
    ctx: &'a ParaphraseContext,
    plan: Plan,
}

impl Planner<'_> {
    fn key(&self, span: Span) -> String {
        let opts = NormalizeOptions {
            strip_code: false,
            ..self.ctx.options.clone()
        };
        normalize(span.slice(self.original), &opts)
            .map(|n| n.folded().trim().to_string())
            .unwrap_or_default()
    }

    fn replacement(&self, span: Span, choice: usize) -> String {
        match self.plan {
            Plan::Mask => MASK_TOKEN.to_string(),
            Plan::Delete => String::new(),
            Plan::Synonym => self
                .ctx
                .thesaurus
                .alternatives(&self.key(span))
                .get(choice)
                .map(|alt| match_case(span.slice(self.original), alt))
                .unwrap_or_default(),
        }
    }

    fn changes(&self, spans: &[Span], choices: &[usize]) -> Vec<ChangedSpan> {
        let mut out: Vec<ChangedSpan> = Vec::with_capacity(spans.len());
        for (&span, &choice) in spans.iter().zip(choices) {
            let replacement = self.replacement(span, choice);
            let floor = out.last().map(|c| c.span.end).unwrap_or(0);
            let span = if replacement.is_empty() {
                deletion_span(self.original, span, floor)
            } else {
                span
            };
            out.push(ChangedSpan { span, replacement });
        }
        out
    }

    /// Map a byte range of the rewritten text back to the original.
    fn map_back(&self, changes: &[ChangedSpan], range: Span) -> Span {
        let mut lo = usize::MAX;
        let mut hi = 0;
        let mut take = |s: usize, e: usize| {
            lo = lo.min(s);
            hi = hi.max(e);
        };
        let (mut out_pos, mut orig_pos) = (0usize, 0usize);
        let mut pieces: Vec<(usize, usize, Span, bool)> = Vec::new();
        for c in changes {
            let n = c.span.start - orig_pos;
            pieces.push((
                out_pos,
                out_pos + n,
                Span::new(orig_pos, c.span.start),
                false,
            ));
            out_pos += n;
            pieces.push((out_pos, out_pos + c.replacement.len(), c.span, true));
            out_pos += c.replacement.len();
            orig_pos = c.span.end;
        }
        let n = self.original.len() - orig_pos;
        pieces.push((
            out_pos,
            out_pos + n,
            Span::new(orig_pos, self.original.len()),
            false,
        ));

        for (os, oe, orig, edited) in pieces {
            let touches = if os == oe {
                range.start < os && os < range.end
            } else {
                range.start < oe && os < range.end
            };
            if !touches {
                continue;
            }
            if edited {
                take(orig.start, orig.end);
            } else {
                let s = orig.start + range.start.max(os) - os;
                let e = orig.start + range.end.min(oe) - os;
                take(s, e);
            }
        }
        if lo > hi {
            Span::new(0, self.original.len())
        } else {
            Span::new(lo, hi)
        }
    }

    fn run(&self, matches: &[RuleMatch]) -> (String, Vec<ChangedSpan>) {
        let mut spans = merge_spans(matches.iter().map(|m| m.span).collect());
        let mut choices = vec![0usize; spans.len()];
        for _ in 0..MAX_ROUNDS {
            let changes = self.changes(&spans, &choices);
            let text = apply_changes(self.original, &changes);
            let residual = self.ctx.residual(&text);
            if residual.is_empty() {
                return (text, changes);
            }
            let mut grown = spans.clone();
            let mut advanced = vec![false; spans.len()];
            for r in &residual {
                let orig = self.map_back(&changes, r.span);
                match spans.iter().position(|s| s.contains(&orig)) {
                    Some(i) if !advanced[i] => {
                        choices[i] += 1;
                        advanced[i] = true;
                    }
                    Some(_) => {}
                    None => grown.push(orig),
                }
            }
            if grown.len() != spans.len() {
                let old: Vec<(Span, usize)> =
                    spans.iter().copied().zip(choices.iter().copied()).collect();
                spans = merge_spans(grown);
                choices = spans
                    .iter()
                    .map(|s| {
                        old.iter()
                            .find(|(o, _)| o == s)
                            .map(|&(_, c)| c)
                            .unwrap_or(0)
                    })
                    .collect();
            }
        }
        let whole = Span::new(0, self.original.len());
        let replacement = if self.plan == Plan::Mask {
            MASK_TOKEN.to_string()
        } else {
            String::new()
        };
        let changes = vec![ChangedSpan {
            span: whole,
            replacement: replacement.clone(),
        }];
        (replacement, changes)
    }
}

fn planned(
    norm: &NormalizedText,
    matches: &[RuleMatch],
    ctx: &ParaphraseContext,
    plan: Plan,
    strategy: Strategy,
) -> ParaphraseSuggestion {
    let planner = Planner {
        original: norm.original(),
        ctx,
        plan,
    };
    let (text, changed_spans) = planner.run(matches);
    ParaphraseSuggestion {
        strategy,
        text,
        changed_spans,
        fallback: false,
        duplicate: false,
    }
}

/// Replace each matched span with its first milder alternative that keeps
/// the text rule-clean, deleting it when none does.
pub fn paraphrase_synonym(
    norm: &NormalizedText,
    matches: &[RuleMatch],
    ctx: &ParaphraseContext,
) -> ParaphraseSuggestion {
    planned(norm, matches, ctx, Plan::Synonym, Strategy::Synonym)
}

/// Replace each matched span with `[MASK]`.
pub fn paraphrase_mask(
    norm: &NormalizedText,
    matches: &[RuleMatch],
    ctx: &ParaphraseContext,
) -> ParaphraseSuggestion {
    planned(norm, matches, ctx, Plan::Mask, Strategy::Mask)
}

/// Remove each matched span, collapsing the surrounding whitespace.
pub fn paraphrase_deletion(
    norm: &NormalizedText,
    matches: &[RuleMatch],
    ctx: &ParaphraseContext,
) -> ParaphraseSuggestion {
    planned(norm, matches, ctx, Plan::Delete, Strategy::Deletion)
}

/// Ask the external rewriter and accept its answer only when rule-clean.
pub fn paraphrase_rewrite(
    body: &str,
    client: &RewriterClient,
    ctx: &ParaphraseContext,
) -> Result<ParaphraseSuggestion, ParaphraseError> {
    let text = client.rewrite(body)?;
    let residual = ctx.residual(&text);
    if !residual.is_empty() {
        let mut ids: Vec<String> = residual.into_iter().map(|m| m.rule_id).collect();
        ids.dedup();
        return Err(ParaphraseError::RewriterUnsafe(ids));
    }
    Ok(ParaphraseSuggestion {
        strategy: Strategy::Rewrite,
        changed_spans: vec![ChangedSpan {
            span: Span::new(0, body.len()),
            replacement: text.clone(),
        }],
        text,
        fallback: false,
        duplicate: false,
    })
}

/// Exactly three suggestions: synonym, mask, then rewrite or, when the
/// rewriter is absent or fails, a deletion-only variant marked `fallback`.
pub fn suggest(
    norm: &NormalizedText,
    matches: &[RuleMatch],
    ctx: &ParaphraseContext,
) -> Result<Vec<ParaphraseSuggestion>, ParaphraseError> {
    if matches.is_empty() {
        return Err(ParaphraseError::NoOffenceFound);
    }
    let third = ctx
        .rewriter
        .as_ref()
        .and_then(|c| paraphrase_rewrite(norm.original(), c, ctx).ok())
        .unwrap_or_else(|| ParaphraseSuggestion {
            fallback: true,
            ..paraphrase_deletion(norm, matches, ctx)
        });
    let mut out = vec![
        paraphrase_synonym(norm, matches, ctx),
        paraphrase_mask(norm, matches, ctx),
        third,
    ];
    for i in 1..out.len() {
        out[i].duplicate = out[..i].iter().any(|s| s.text == out[i].text);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testserver;

    fn ctx() -> ParaphraseContext {
        ParaphraseContext::builtin()
    }

    fn run(s: &str) -> (NormalizedText, Vec<RuleMatch>) {
        let n = normalize(s, &NormalizeOptions::default()).unwrap();
        let m = RuleSet::builtin().scan(&n);
        (n, m)
    }

    fn custom(entries: Vec<(&str, Vec<&str>)>) -> ParaphraseContext {
        let rules = RuleSet::builtin();
        ParaphraseContext {
            thesaurus: Arc::new(
                MilderThesaurus::from_entries(entries, &rules, &NormalizeOptions::default())
                    .unwrap(),
            ),
            ..ctx()
        }
    }

    #[test]
    fn synonym_uses_thesaurus() {
        let (n, m) = run("you idiot");
        let s = paraphrase_synonym(&n, &m, &custom(vec![("idiot", vec!["unwise person"])]));
        assert_eq!(s.text, "you unwise person");
        assert_eq!(s.changed_spans.len(), 1);
    }

    #[test]
    fn missing_alternative_deletes_with_whitespace() {
        let (n, m) = run("you idiot");
        let s = paraphrase_synonym(&n, &m, &custom(vec![]));
        assert_eq!(s.text, "you");
        assert_eq!(apply_changes(n.original(), &s.changed_spans), s.text);
    }

    #[test]
    fn two_matches_two_changes() {
        let (n, m) = run("you idiot, you moron");
        let s = paraphrase_synonym(&n, &m, &ctx());
        assert_eq!(s.changed_spans.len(), 2);
        assert!(s.text.starts_with("you ") && s.text.contains(", you "));
    }

    #[test]
    fn mask_examples() {
        let (n, m) = run("this is f***ing bad");
        assert_eq!(paraphrase_mask(&n, &m, &ctx()).text, "this is [MASK] bad");
        let (n, m) = run("idiot and moron");
        assert_eq!(paraphrase_mask(&n, &m, &ctx()).text, "[MASK] and [MASK]");
        let (n, m) = run("idiot");
        assert_eq!(paraphrase_mask(&n, &m, &ctx()).text, "[MASK]");
    }

    #[test]
    fn deletion_collapses_whitespace() {
        let (n, m) = run("idiot you are");
        assert_eq!(paraphrase_deletion(&n, &m, &ctx()).text, "you are");
        let (n, m) = run("you are an idiot!");
        assert_eq!(paraphrase_deletion(&n, &m, &ctx()).text, "you are an!");
        let (n, m) = run("idiot idiot");
        assert_eq!(paraphrase_deletion(&n, &m, &ctx()).text, "");
    }

    #[test]
    fn capitalisation_follows_original() {
        let (n, m) = run("Idiot, read the docs");
        let s = paraphrase_synonym(&n, &m, &ctx());
        assert!(s.text.starts_with("Unwise person"), "{}", s.text);
    }

    #[test]
    fn suggest_offline_falls_back_to_deletion() {
        let (n, m) = run("you idiot");
        let s = suggest(&n, &m, &ctx()).unwrap();
        let strategies: Vec<Strategy> = s.iter().map(|x| x.strategy).collect();
        assert_eq!(
            strategies,
            [Strategy::Synonym, Strategy::Mask, Strategy::Deletion]
        );
        assert!(s[2].fallback);
        for x in &s {
            assert!(ctx().residual(&x.text).is_empty(), "{}", x.text);
            assert_eq!(apply_changes(n.original(), &x.changed_spans), x.text);
        }
    }

    #[test]
    fn suggest_requires_matches() {
        let (n, m) = run("looks good to me");
        assert_eq!(
            suggest(&n, &m, &ctx()),
            Err(ParaphraseError::NoOffenceFound)
        );
    }

    #[test]
    fn duplicates_are_flagged() {
        let (n, m) = run("idiot");
        let c = custom(vec![]);
        let s = suggest(&n, &m, &c).unwrap();
        assert_eq!(s[0].text, "");
        assert!(s[2].duplicate && !s[1].duplicate);
    }

    #[test]
    fn unsafe_thesaurus_is_rejected() {
        let err = MilderThesaurus::from_entries(
            [("idiot", vec!["moron"])],
            &RuleSet::builtin(),
            &NormalizeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ParaphraseError::UnsafeAlternative { .. }));
    }

    #[test]
    fn rewriter_paths() {
        let c = ctx();
        let ok = RewriterClient::new(
            &testserver::serve(200, r#"{"rewrite":"I disagree with you"}"#, Duration::ZERO),
            Duration::from_secs(2),
        );
        let s = paraphrase_rewrite("you idiot", &ok, &c).unwrap();
        assert_eq!(
            (s.strategy, s.text.as_str()),
            (Strategy::Rewrite, "I disagree with you")
        );

        let bad = RewriterClient::new(
            &testserver::serve(200, r#"{"rewrite":"you moron"}"#, Duration::ZERO),
            Duration::from_secs(2),
        );
        assert!(matches!(
            paraphrase_rewrite("you idiot", &bad, &c),
            Err(ParaphraseError::RewriterUnsafe(_))
        ));

        let slow = RewriterClient::new(
            &testserver::serve(200, r#"{"rewrite":"fine"}"#, Duration::from_millis(800)),
            Duration::from_millis(100),
        );
        assert!(matches!(
            paraphrase_rewrite("you idiot", &slow, &c),
            Err(ParaphraseError::RewriterUnavailable(_))
        ));

        let (n, m) = run("you idiot");
        let with = ParaphraseContext {
            rewriter: Some(ok),
            ..ctx()
        };
        let s = suggest(&n, &m, &with).unwrap();
        assert_eq!(s[2].strategy, Strategy::Rewrite);
        assert!(!s[2].fallback);
    }

    #[test]
    fn builtin_milder_thesaurus_loads() {
        assert!(MilderThesaurus::builtin().len() >= 100);
    }
}
