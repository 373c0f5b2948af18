//! Line-oriented data file readers shared by the lexicon-style artifacts.
//!
//! All of them are UTF-8, one record per line, `#` starts a comment line and
//! blank lines are ignored.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{file}: line {line}: {message}")]
pub struct DataError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

impl DataError {
    pub fn new(file: &str, line: usize, message: impl Into<String>) -> Self {
        DataError {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Iterate the meaningful lines of a data file as `(1-based line number, line)`.
pub fn records(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

/// Split a record into exactly two tab-separated columns.
pub fn two_columns<'a>(
    file: &str,
    line: usize,
    record: &'a str,
) -> Result<(&'a str, &'a str), DataError> {
    let mut cols = record.split('\t');
    match (cols.next(), cols.next(), cols.next()) {
        (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
            Ok((a.trim(), b.trim()))
        }
        _ => Err(DataError::new(
            file,
            line,
            "expected two tab-separated columns",
        )),
    }
}

/// `term<TAB>number` files.
pub fn parse_weighted(file: &str, src: &str) -> Result<BTreeMap<String, f64>, DataError> {
    let mut out = BTreeMap::new();
    for (line, rec) in records(src) {
        let (term, value) = two_columns(file, line, rec)?;
        let value: f64 = value
            .parse()
            .map_err(|_| DataError::new(file, line, format!("not a number: {value:?}")))?;
        if !value.is_finite() {
            return Err(DataError::new(file, line, "value must be finite"));
        }
        if out.insert(term.to_string(), value).is_some() {
            return Err(DataError::new(
                file,
                line,
                format!("duplicate term {term:?}"),
            ));
        }
    }
    Ok(out)
}

/// `term<TAB>alt1|alt2|...` files.
pub fn parse_alternatives(
    file: &str,
    src: &str,
) -> Result<BTreeMap<String, Vec<String>>, DataError> {
    let mut out = BTreeMap::new();
    for (line, rec) in records(src) {
        let (term, alts) = two_columns(file, line, rec)?;
        let alts: Vec<String> = alts
            .split('|')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_string)
            .collect();
        if alts.is_empty() {
            return Err(DataError::new(file, line, "no alternatives listed"));
        }
        if out.insert(term.to_lowercase(), alts).is_some() {
            return Err(DataError::new(
                file,
                line,
                format!("duplicate term {term:?}"),
            ));
        }
    }
    Ok(out)
}

/// One term per line.
pub fn parse_term_list(src: &str) -> BTreeSet<String> {
    records(src).map(|(_, l)| l.trim().to_lowercase()).collect()
}
