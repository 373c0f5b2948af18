//! Comment normalization: lowercasing, obfuscation folding, run collapsing and
//! code stripping, with an exact map from every folded character back to the
//! original bytes it came from.
//!
//! Folding is contextual. Text is split into runs of alphanumerics and
//! substitution sources; a run is folded only when it contains a letter, or at
//! least two non-digit sources (`@$$`). Plain numbers such as `100` or `+1`
//! are left alone, and a `!` at the end of a run is sentence punctuation, not
//! an obfuscated `i`.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::data;
use crate::lexicon::{records, two_columns, DataError};
use crate::Span;

/// Bodies larger than this are rejected.
pub const MAX_BODY_BYTES: usize = 65_536;

/// Sources that read as punctuation when they end a run.
const TRAILING_PUNCTUATION: &[char] = &['!'];

/// Runs of the same character longer than this are collapsed.
const MAX_RUN: usize = 3;
const COLLAPSED_RUN: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("input is {len} bytes, the limit is {max}")]
    InputTooLarge { len: usize, max: usize },
    #[error("input is not valid UTF-8 (valid up to byte {valid_up_to})")]
    InvalidEncoding { valid_up_to: usize },
}

/// Character substitution table used for obfuscation folding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionTable {
    map: BTreeMap<char, char>,
}

impl SubstitutionTable {
    /// Parse a `from<TAB>to` table. Each side must be a single character,
    /// targets must be lowercase and must not themselves be sources.
    pub fn parse(src: &str) -> Result<Self, DataError> {
        const FILE: &str = "substitution table";
        let mut map = BTreeMap::new();
        let single = |s: &str, line| {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(DataError::new(
                    FILE,
                    line,
                    format!("{s:?} is not a single character"),
                )),
            }
        };
        for (line, rec) in records(src) {
            let (from, to) = two_columns(FILE, line, rec)?;
            let (from, to) = (single(from, line)?, single(to, line)?);
            if to.to_lowercase().next() != Some(to) {
                return Err(DataError::new(
                    FILE,
                    line,
                    format!("target {to:?} is not lowercase"),
                ));
            }
            if map.insert(from, to).is_some() {
                return Err(DataError::new(
                    FILE,
                    line,
                    format!("duplicate source {from:?}"),
                ));
            }
        }
        if let Some((from, to)) = map.iter().find(|(_, to)| map.contains_key(to)) {
            return Err(DataError::new(
                FILE,
                0,
                format!("target {to:?} of {from:?} is also a source"),
            ));
        }
        Ok(SubstitutionTable { map })
    }

    /// The shipped table.
    pub fn builtin() -> Arc<SubstitutionTable> {
        static TABLE: OnceLock<Arc<SubstitutionTable>> = OnceLock::new();
        TABLE
            .get_or_init(|| {
                Arc::new(SubstitutionTable::parse(data::SUBSTITUTIONS_TSV).expect("builtin table"))
            })
            .clone()
    }

    pub fn get(&self, c: char) -> Option<char> {
        self.map.get(&c).copied()
    }

    pub fn is_source(&self, c: char) -> bool {
        self.map.contains_key(&c)
    }

    /// Sources that map to `target`.
    pub fn sources_of(&self, target: char) -> impl Iterator<Item = char> + '_ {
        self.map
            .iter()
            .filter(move |(_, &t)| t == target)
            .map(|(&s, _)| s)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (char, char)> + '_ {
        self.map.iter().map(|(&s, &t)| (s, t))
    }
}

#[derive(Debug, Clone)]
pub struct NormalizeOptions {
    /// Blank out fenced and inline code in the folded form.
    pub strip_code: bool,
    pub table: Arc<SubstitutionTable>,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            strip_code: true,
            table: SubstitutionTable::builtin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Folded text of the token.
    pub surface: String,
    /// Byte offsets into the original text.
    pub start: usize,
    pub end: usize,
    pub is_word: bool,
}

impl Token {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

/// A comment together with its folded form and the offset map between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    original: String,
    folded: String,
    /// Original byte span of each folded character.
    offset_map: Vec<Span>,
    /// Byte offset of each folded character in `folded`, plus `folded.len()`.
    folded_offsets: Vec<usize>,
    code_spans: Vec<Span>,
    tokens: Vec<Token>,
}

impl NormalizedText {
    pub fn original(&self) -> &str {
        &self.original
    }

    pub fn folded(&self) -> &str {
        &self.folded
    }

    pub fn offset_map(&self) -> &[Span] {
        &self.offset_map
    }

    /// Original byte ranges blanked as code.
    pub fn code_spans(&self) -> &[Span] {
        &self.code_spans
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn word_tokens(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.is_word)
    }

    /// Original text covered by a token.
    pub fn original_surface(&self, token: &Token) -> &str {
        &self.original[token.start..token.end]
    }

    /// Map a byte range of the folded text to the original span it covers.
    /// Returns `None` for empty ranges or ranges not on character boundaries.
    pub fn map_folded_range(&self, range: Range<usize>) -> Option<Span> {
        if range.start >= range.end {
            return None;
        }
        let first = self.folded_offsets.binary_search(&range.start).ok()?;
        let end = self.folded_offsets.binary_search(&range.end).ok()?;
        Some(Span::new(
            self.offset_map[first].start,
            self.offset_map[end - 1].end,
        ))
    }

    /// Whether an original span lies inside a blanked code segment.
    pub fn in_code(&self, span: Span) -> bool {
        self.code_spans.iter().any(|c| c.overlaps(&span))
    }
}

/// Validate raw bytes and normalize them.
pub fn normalize_bytes(
    body: &[u8],
    opts: &NormalizeOptions,
) -> Result<NormalizedText, NormalizeError> {
    check_size(body.len())?;
    let body = std::str::from_utf8(body).map_err(|e| NormalizeError::InvalidEncoding {
        valid_up_to: e.valid_up_to(),
    })?;
    normalize(body, opts)
}

fn check_size(len: usize) -> Result<(), NormalizeError> {
    if len > MAX_BODY_BYTES {
        Err(NormalizeError::InputTooLarge {
            len,
            max: MAX_BODY_BYTES,
        })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    ch: char,
    span: Span,
    code: bool,
}

pub fn normalize(body: &str, opts: &NormalizeOptions) -> Result<NormalizedText, NormalizeError> {
    check_size(body.len())?;
    let code: Vec<Span> = if opts.strip_code {
        code_spans(body)
            .into_iter()
            .map(|r| Span::new(r.start, r.end))
            .collect()
    } else {
        Vec::new()
    };

    let mut units = Vec::with_capacity(body.len());
    let mut blocks = code.iter().peekable();
    let mut pos = 0;
    while pos < body.len() {
        if let Some(block) = blocks.next_if(|b| b.start == pos) {
            units.push(Unit {
                ch: ' ',
                span: *block,
                code: true,
            });
            pos = block.end;
            continue;
        }
        let c = body[pos..].chars().next().expect("char boundary");
        let lower = c.to_lowercase().next().unwrap_or(c);
        units.push(Unit {
            ch: lower,
            span: Span::new(pos, pos + c.len_utf8()),
            code: false,
        });
        pos += c.len_utf8();
    }

    fold_runs(&mut units, &opts.table);
    let units = collapse_runs(units);

    let mut folded = String::with_capacity(units.len());
    let mut offset_map = Vec::with_capacity(units.len());
    let mut folded_offsets = Vec::with_capacity(units.len() + 1);
    for u in &units {
        folded_offsets.push(folded.len());
        folded.push(u.ch);
        offset_map.push(u.span);
    }
    folded_offsets.push(folded.len());

    let tokens = tokenize(&folded, &folded_offsets, &offset_map);
    Ok(NormalizedText {
        original: body.to_string(),
        folded,
        offset_map,
        folded_offsets,
        code_spans: code,
        tokens,
    })
}

fn fold_runs(units: &mut [Unit], table: &SubstitutionTable) {
    let in_run = |u: &Unit| !u.code && (u.ch.is_alphanumeric() || table.is_source(u.ch));
    let mut i = 0;
    while i < units.len() {
        if !in_run(&units[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < units.len() && in_run(&units[i]) {
            i += 1;
        }
        let mut core_end = i;
        while core_end > start
            && TRAILING_PUNCTUATION.contains(&units[core_end - 1].ch)
            && table.is_source(units[core_end - 1].ch)
        {
            core_end -= 1;
        }
        let core = &mut units[start..core_end];
        let has_letter = core.iter().any(|u| u.ch.is_alphabetic());
        let symbol_sources = core
            .iter()
            .filter(|u| table.is_source(u.ch) && !u.ch.is_numeric())
            .count();
        if has_letter || symbol_sources >= 2 {
            for u in core.iter_mut() {
                if let Some(t) = table.get(u.ch) {
                    u.ch = t;
                }
            }
        }
    }
}

fn collapse_runs(units: Vec<Unit>) -> Vec<Unit> {
    let mut out = Vec::with_capacity(units.len());
    let mut i = 0;
    while i < units.len() {
        let mut j = i + 1;
        while j < units.len() && units[j].ch == units[i].ch {
            j += 1;
        }
        if j - i > MAX_RUN {
            out.extend_from_slice(&units[i..i + COLLAPSED_RUN]);
            // The last kept character absorbs the dropped ones.
            let last = out.last_mut().expect("kept unit");
            last.span.end = units[j - 1].span.end;
        } else {
            out.extend_from_slice(&units[i..j]);
        }
        i = j;
    }
    out
}

/// Word characters agree with the regex engine's `\w` for the scripts we see.
pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn tokenize(folded: &str, offsets: &[usize], map: &[Span]) -> Vec<Token> {
    let chars: Vec<char> = folded.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if is_word_char(c) {
            i += 1;
            while i < chars.len() {
                if is_word_char(chars[i]) {
                    i += 1;
                } else if is_apostrophe(chars[i])
                    && i + 1 < chars.len()
                    && is_word_char(chars[i + 1])
                {
                    i += 2;
                } else {
                    break;
                }
            }
        } else {
            i += 1;
        }
        tokens.push(Token {
            surface: folded[offsets[start]..offsets[i]].to_string(),
            start: map[start].start,
            end: map[i - 1].end,
            is_word: is_word_char(c),
        });
    }
    tokens
}

/// Byte ranges of paired code fences and inline code spans, in order.
/// Unpaired backticks are not code.
pub fn code_spans(body: &str) -> Vec<Range<usize>> {
    const FENCE: &str = "```";
    let bytes = body.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'`' {
            i += 1;
            continue;
        }
        if body[i..].starts_with(FENCE) {
            match body[i + FENCE.len()..].find(FENCE) {
                Some(rel) => {
                    let end = i + FENCE.len() + rel + FENCE.len();
                    spans.push(i..end);
                    i = end;
                }
                None => i += FENCE.len(),
            }
        } else {
            match body[i + 1..].find('`') {
                Some(rel) => {
                    let end = i + 1 + rel + 1;
                    spans.push(i..end);
                    i = end;
                }
                None => i += 1,
            }
        }
    }
    spans
}

/// Replace every paired code segment with a single space.
pub fn strip_code(body: &str) -> String {
    let mut out = String::with_capacity(body.len());
    let mut last = 0;
    for span in code_spans(body) {
        out.push_str(&body[last..span.start]);
        out.push(' ');
        last = span.end;
    }
    out.push_str(&body[last..]);
    out
}
