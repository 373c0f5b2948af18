//! Offensive-pattern rulesets and the scanner that produces highlightable
//! matches.
//!
//! Patterns are restricted to a portable regex subset (literals, classes,
//! alternation, repetition, non-capturing groups and `\b`) so that scanning
//! stays linear-time on any engine. Each pattern is matched
//! case-insensitively against the raw text, the folded text, or both; folded
//! hits are mapped back to original byte spans.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;
use std::sync::{Arc, OnceLock};

use regex::{Regex, RegexSet};
use regex_syntax::ast::{self, Ast};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data;
use crate::normalize::NormalizedText;
use crate::{ClassSet, OffenceClass, Span};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("ruleset parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate rule id {0:?}")]
    DuplicateRuleId(String),
    #[error("rule {id:?} has an invalid pattern: {reason}")]
    InvalidPattern { id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Mild,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppliesTo {
    Raw,
    Folded,
    Both,
}

impl AppliesTo {
    fn raw(self) -> bool {
        matches!(self, AppliesTo::Raw | AppliesTo::Both)
    }

    fn folded(self) -> bool {
        matches!(self, AppliesTo::Folded | AppliesTo::Both)
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleRecord {
    id: String,
    pattern: String,
    classes: Vec<OffenceClass>,
    severity: Severity,
    applies_to: AppliesTo,
    #[serde(default = "default_true")]
    word_boundary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleSetRecord {
    version: String,
    rules: Vec<RuleRecord>,
}

#[derive(Debug, Clone)]
pub struct RulePattern {
    pub id: String,
    pub pattern: String,
    pub classes: ClassSet,
    pub severity: Severity,
    pub applies_to: AppliesTo,
    pub word_boundary: bool,
    regex: Regex,
}

impl RulePattern {
    pub fn regex(&self) -> &Regex {
        &self.regex
    }
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    version: String,
    patterns: Vec<RulePattern>,
    raw_set: RegexSet,
    folded_set: RegexSet,
    raw_index: Vec<usize>,
    folded_index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub rule_id: String,
    pub span: Span,
    pub surface: String,
    pub classes: ClassSet,
    pub severity: Severity,
}

/// Parse and compile a ruleset from its JSON form.
pub fn load_ruleset(mut source: impl Read) -> Result<RuleSet, RuleError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| RuleError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
    RuleSet::from_json(&text)
}

impl RuleSet {
    pub fn from_json(text: &str) -> Result<RuleSet, RuleError> {
        let record: RuleSetRecord = serde_json::from_str(text).map_err(|e| RuleError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if record.version.trim().is_empty() {
            return Err(RuleError::Parse {
                line: 1,
                message: "version must be nonempty".into(),
            });
        }
        if record.rules.is_empty() {
            return Err(RuleError::Parse {
                line: 1,
                message: "ruleset has no rules".into(),
            });
        }
        let mut seen = HashSet::new();
        let mut patterns = Vec::with_capacity(record.rules.len());
        for rule in record.rules {
            if !seen.insert(rule.id.clone()) {
                return Err(RuleError::DuplicateRuleId(rule.id));
            }
            patterns.push(compile_rule(rule)?);
        }
        RuleSet::from_patterns(record.version, patterns)
    }

    fn from_patterns(version: String, patterns: Vec<RulePattern>) -> Result<RuleSet, RuleError> {
        let pick = |f: fn(AppliesTo) -> bool| -> Vec<usize> {
            (0..patterns.len())
                .filter(|&i| f(patterns[i].applies_to))
                .collect()
        };
        let raw_index = pick(AppliesTo::raw);
        let folded_index = pick(AppliesTo::folded);
        let set = |idx: &[usize]| {
            RegexSet::new(idx.iter().map(|&i| patterns[i].regex.as_str())).map_err(|e| {
                RuleError::InvalidPattern {
                    id: "<set>".into(),
                    reason: e.to_string(),
                }
            })
        };
        Ok(RuleSet {
            raw_set: set(&raw_index)?,
            folded_set: set(&folded_index)?,
            raw_index,
            folded_index,
            version,
            patterns,
        })
    }

    /// The shipped default ruleset.
    pub fn builtin() -> Arc<RuleSet> {
        static RULES: OnceLock<Arc<RuleSet>> = OnceLock::new();
        RULES
            .get_or_init(|| {
                Arc::new(RuleSet::from_json(data::RULESET_JSON).expect("builtin ruleset"))
            })
            .clone()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn patterns(&self) -> &[RulePattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// All rule hits, sorted by span start. Hits inside blanked code are
    /// ignored; the same rule hitting the same span through both the raw and
    /// folded text is reported once.
    pub fn scan(&self, norm: &NormalizedText) -> Vec<RuleMatch> {
        let mut hits: BTreeSet<(Span, usize)> = BTreeSet::new();

        let raw = norm.original();
        for set_idx in self.raw_set.matches(raw).iter() {
            let rule = self.raw_index[set_idx];
            for m in self.patterns[rule].regex.find_iter(raw) {
                let span = Span::new(m.start(), m.end());
                if !span.is_empty() && !norm.in_code(span) {
                    hits.insert((span, rule));
                }
            }
        }

        let folded = norm.folded();
        for set_idx in self.folded_set.matches(folded).iter() {
            let rule = self.folded_index[set_idx];
            for m in self.patterns[rule].regex.find_iter(folded) {
                if let Some(span) = norm.map_folded_range(m.range()) {
                    hits.insert((span, rule));
                }
            }
        }

        let mut out: Vec<RuleMatch> = hits
            .into_iter()
            .map(|(span, rule)| {
                let p = &self.patterns[rule];
                RuleMatch {
                    rule_id: p.id.clone(),
                    span,
                    surface: raw[span.start..span.end].to_string(),
                    classes: p.classes.clone(),
                    severity: p.severity,
                }
            })
            .collect();
        out.sort_by(|a, b| {
            (a.span.start, a.span.end, &a.rule_id).cmp(&(b.span.start, b.span.end, &b.rule_id))
        });
        out
    }

    /// Convenience: whether any rule hits `norm`.
    pub fn is_clean(&self, norm: &NormalizedText) -> bool {
        self.scan(norm).is_empty()
    }
}

/// Union of the classes carried by `matches`.
pub fn classes_of(matches: &[RuleMatch]) -> ClassSet {
    matches
        .iter()
        .flat_map(|m| m.classes.iter().copied())
        .collect()
}

fn compile_rule(rule: RuleRecord) -> Result<RulePattern, RuleError> {
    let invalid = |reason: String| RuleError::InvalidPattern {
        id: rule.id.clone(),
        reason,
    };
    if rule.id.trim().is_empty() {
        return Err(invalid("empty rule id".into()));
    }
    if rule.classes.is_empty() {
        return Err(invalid("no offence classes".into()));
    }
    let parsed = ast::parse::Parser::new()
        .parse(&rule.pattern)
        .map_err(|e| invalid(e.to_string()))?;
    check_dialect(&parsed).map_err(|what| invalid(format!("{what} is not allowed")))?;

    let source = if rule.word_boundary {
        format!(r"(?i)\b(?:{})\b", rule.pattern)
    } else {
        format!("(?i)(?:{})", rule.pattern)
    };
    let regex = Regex::new(&source).map_err(|e| invalid(e.to_string()))?;
    let bare =
        Regex::new(&format!("^(?:{})$", rule.pattern)).map_err(|e| invalid(e.to_string()))?;
    if bare.is_match("") {
        return Err(invalid("pattern matches the empty string".into()));
    }
    Ok(RulePattern {
        classes: rule.classes.iter().copied().collect(),
        id: rule.id,
        pattern: rule.pattern,
        severity: rule.severity,
        applies_to: rule.applies_to,
        word_boundary: rule.word_boundary,
        regex,
    })
}

fn check_dialect(node: &Ast) -> Result<(), &'static str> {
    match node {
        Ast::Empty(_)
        | Ast::Literal(_)
        | Ast::Dot(_)
        | Ast::ClassUnicode(_)
        | Ast::ClassPerl(_)
        | Ast::ClassBracketed(_) => Ok(()),
        Ast::Flags(_) => Err("inline flags"),
        Ast::Assertion(a) => match a.kind {
            ast::AssertionKind::WordBoundary => Ok(()),
            _ => Err("anchors other than \\b"),
        },
        Ast::Repetition(r) => check_dialect(&r.ast),
        Ast::Group(g) => match &g.kind {
            ast::GroupKind::NonCapturing(flags) if flags.items.is_empty() => check_dialect(&g.ast),
            ast::GroupKind::NonCapturing(_) => Err("inline flags"),
            _ => Err("capturing groups"),
        },
        Ast::Alternation(alt) => alt.asts.iter().try_for_each(check_dialect),
        Ast::Concat(c) => c.asts.iter().try_for_each(check_dialect),
    }
}
