use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CorpusError, RawComment};
use crate::pipeline::{Engine, EngineError, Mode};
use crate::rules::RuleMatch;
use crate::{ClassSet, OffenceClass};

/// `100 * offensive / total` in hundredths of a percent, rounded half-up.
pub fn prevalence_hundredths(offensive: u64, total: u64) -> Result<u64, CorpusError> {
    if total == 0 || offensive > total {
        return Err(CorpusError::InvalidCounts { offensive, total });
    }
    let num = offensive as u128 * 10_000 * 2 + total as u128;
    Ok((num / (2 * total as u128)) as u64)
}

/// Prevalence in percent, rounded half-up to two decimals.
pub fn prevalence_rate(offensive: u64, total: u64) -> Result<f64, CorpusError> {
    prevalence_hundredths(offensive, total).map(|h| h as f64 / 100.0)
}

/// Two-decimal rendering of a hundredths value.
pub fn format_percent(hundredths: u64) -> String {
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub count: u64,
    /// Percent of offensive records carrying the class.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub platform: String,
    pub total: u64,
    pub offensive: u64,
    /// Percent, two decimals.
    pub rate: f64,
    pub per_class: BTreeMap<OffenceClass, ClassShare>,
    /// Records the engine rejected (oversized bodies).
    #[serde(default)]
    pub skipped: u64,
}

/// One offensive record of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub id: String,
    pub platform: String,
    pub body: String,
    pub classes: ClassSet,
    pub score: f64,
    pub matches: Vec<RuleMatch>,
}

/// Share of offensive records carrying each class. Shares may sum past 100
/// because records can carry several classes.
pub fn class_breakdown<'a, I>(export: I) -> Result<BTreeMap<OffenceClass, ClassShare>, CorpusError>
where
    I: IntoIterator<Item = &'a ClassSet>,
{
    let mut n = 0u64;
    let mut counts = [0u64; 3];
    for classes in export {
        n += 1;
        for c in classes {
            counts[c.index()] += 1;
        }
    }
    if n == 0 {
        return Err(CorpusError::EmptyExport);
    }
    Ok(OffenceClass::ALL
        .into_iter()
        .map(|c| {
            let count = counts[c.index()];
            (
                c,
                ClassShare {
                    count,
                    percent: 100.0 * count as f64 / n as f64,
                },
            )
        })
        .collect())
}

/// Run detection over a stream, handing each offensive record to `sink`.
/// Memory use is independent of the corpus size.
pub fn scan_corpus_with<I, F>(records: I, engine: &Engine, mode: Mode, mut sink: F) -> CorpusStats
where
    I: IntoIterator<Item = RawComment>,
    F: FnMut(ExportRecord),
{
    let mut platform: Option<String> = None;
    let (mut total, mut offensive, mut skipped) = (0u64, 0u64, 0u64);
    let mut counts = [0u64; 3];
    for r in records {
        match &platform {
            None => platform = Some(r.platform.clone()),
            Some(p) if *p != r.platform => platform = Some("mixed".into()),
            _ => {}
        }
        let d = match engine.detect(&r.body, mode) {
            Ok(d) => d,
            Err(EngineError::InputTooLarge { .. } | EngineError::InvalidEncoding { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => unreachable!("detect only fails on input: {e}"),
        };
        total += 1;
        if d.verdict.is_offensive() {
            offensive += 1;
            for c in &d.classes {
                counts[c.index()] += 1;
            }
            sink(ExportRecord {
                id: r.id,
                platform: r.platform,
                body: r.body,
                classes: d.classes,
                score: d.score.value,
                matches: d.matches,
            });
        }
    }
    let per_class = OffenceClass::ALL
        .into_iter()
        .map(|c| {
            let count = counts[c.index()];
            let percent = if offensive == 0 {
                0.0
            } else {
                100.0 * count as f64 / offensive as f64
            };
            (c, ClassShare { count, percent })
        })
        .collect();
    CorpusStats {
        platform: platform.unwrap_or_default(),
        total,
        offensive,
        rate: prevalence_rate(offensive, total.max(1)).unwrap_or(0.0),
        per_class,
        skipped,
    }
}

/// [`scan_corpus_with`] collecting the export.
pub fn scan_corpus<I>(records: I, engine: &Engine, mode: Mode) -> (CorpusStats, Vec<ExportRecord>)
where
    I: IntoIterator<Item = RawComment>,
{
    let mut export = Vec::new();
    let stats = scan_corpus_with(records, engine, mode, |r| export.push(r));
    (stats, export)
}

/// Aligned text table, one row per stats block.
pub fn render_stats_table(stats: &[CorpusStats]) -> String {
    let header = [
        "platform",
        "total",
        "offensive",
        "rate %",
        "Personal %",
        "Racial %",
        "Swearing %",
    ];
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|s| {
            let mut row = vec![
                s.platform.clone(),
                s.total.to_string(),
                s.offensive.to_string(),
                format!("{:.2}", s.rate),
            ];
            for c in OffenceClass::ALL {
                let pct = s.per_class.get(&c).map(|x| x.percent).unwrap_or(0.0);
                row.push(format!("{pct:.2}"));
            }
            row
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].chars().count())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let mut parts = Vec::with_capacity(cells.len());
        for (i, c) in cells.into_iter().enumerate() {
            if i == 0 {
                parts.push(format!("{c:<w$}", w = widths[i]));
            } else {
                parts.push(format!("{c:>w$}", w = widths[i]));
            }
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prevalence_examples() {
        assert_eq!(prevalence_rate(991, 229_250).unwrap(), 0.43);
        assert_eq!(prevalence_rate(155, 237_000).unwrap(), 0.07);
        assert_eq!(prevalence_rate(0, 1000).unwrap(), 0.0);
        assert_eq!(
            format_percent(prevalence_hundredths(155, 237_000).unwrap()),
            "0.07"
        );
        assert!(prevalence_rate(2, 1).is_err());
        assert!(prevalence_rate(0, 0).is_err());
    }

    #[test]
    fn half_up_rounding() {
        // 1/800 = 0.125% -> 0.13
        assert_eq!(prevalence_hundredths(1, 800).unwrap(), 13);
        assert_eq!(prevalence_hundredths(1, 1).unwrap(), 10_000);
    }

    #[test]
    fn breakdown_examples() {
        use OffenceClass::*;
        let mut sets: Vec<ClassSet> = Vec::new();
        sets.extend((0..79).map(|_| ClassSet::from([Personal])));
        sets.extend((0..20).map(|_| ClassSet::from([Swearing])));
        sets.push(ClassSet::from([Swearing, Racial]));
        let b = class_breakdown(&sets).unwrap();
        assert_eq!(b[&Personal].percent, 79.0);
        assert_eq!(b[&Swearing].percent, 21.0);
        assert_eq!(b[&Racial].percent, 1.0);

        let both = vec![ClassSet::from([Personal, Swearing]); 5];
        let b = class_breakdown(&both).unwrap();
        assert_eq!((b[&Personal].percent, b[&Swearing].percent), (100.0, 100.0));
        assert_eq!(class_breakdown(&[]), Err(CorpusError::EmptyExport));
    }

    #[test]
    fn table_is_aligned() {
        let s = CorpusStats {
            platform: "gitter".into(),
            total: 229_250,
            offensive: 991,
            rate: 0.43,
            per_class: BTreeMap::new(),
            skipped: 0,
        };
        let t = render_stats_table(&[s]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("gitter"));
        assert!(lines[1].contains("0.43"));
    }
}
