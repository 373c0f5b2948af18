use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{CorpusError, Format, RawComment};

/// A skipped record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    /// 1-based line (JSONL) or data row (CSV).
    pub record: usize,
    pub reason: String,
}

const COLUMNS: [&str; 4] = ["platform", "id", "created_at", "body"];

enum Source<'a> {
    Jsonl(BufReader<Box<dyn Read + 'a>>),
    Csv {
        reader: csv::Reader<Box<dyn Read + 'a>>,
        columns: [usize; 4],
    },
}

/// Streaming reader over a comment dump. Malformed and non-UTF-8 records are
/// skipped and counted in [`Ingest::warnings`].
pub struct Ingest<'a> {
    source: Source<'a>,
    record: usize,
    warnings: Vec<IngestWarning>,
    done: bool,
}

#[derive(Deserialize)]
struct JsonRecord {
    platform: String,
    id: String,
    created_at: String,
    body: String,
}

pub fn ingest<'a>(source: impl Read + 'a, format: Format) -> Result<Ingest<'a>, CorpusError> {
    let boxed: Box<dyn Read + 'a> = Box::new(source);
    let source = match format {
        Format::Jsonl => Source::Jsonl(BufReader::new(boxed)),
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(boxed);
            let headers = reader
                .byte_headers()
                .map_err(|e| CorpusError::UnreadableSource(e.to_string()))?
                .clone();
            if headers.is_empty() {
                Source::Csv {
                    reader,
                    columns: [0, 1, 2, 3],
                }
            } else {
                let mut columns = [0; 4];
                for (slot, name) in columns.iter_mut().zip(COLUMNS) {
                    *slot = headers
                        .iter()
                        .position(|h| h.trim_ascii() == name.as_bytes())
                        .ok_or_else(|| {
                            CorpusError::UnreadableSource(format!(
                                "CSV header lacks column {name:?}"
                            ))
                        })?;
                }
                Source::Csv { reader, columns }
            }
        }
    };
    Ok(Ingest {
        source,
        record: 0,
        warnings: Vec::new(),
        done: false,
    })
}

pub fn ingest_path(path: &Path, format: Option<Format>) -> Result<Ingest<'static>, CorpusError> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    let file = File::open(path)
        .map_err(|e| CorpusError::UnreadableSource(format!("{}: {e}", path.display())))?;
    ingest(file, format)
}

impl Ingest<'_> {
    pub fn warnings(&self) -> &[IngestWarning] {
        &self.warnings
    }

    fn warn(&mut self, reason: impl Into<String>) {
        self.warnings.push(IngestWarning {
            record: self.record,
            reason: reason.into(),
        });
    }

    fn next_jsonl(&mut self) -> Option<Result<RawComment, String>> {
        let Source::Jsonl(reader) = &mut self.source else {
            unreachable!()
        };
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(format!("read error: {e}")));
                }
            }
            self.record += 1;
            if buf.trim_ascii().is_empty() {
                continue;
            }
            let line = match std::str::from_utf8(&buf) {
                Ok(l) => l,
                Err(_) => return Some(Err("not valid UTF-8".into())),
            };
            return Some(
                serde_json::from_str::<JsonRecord>(line)
                    .map(|r| RawComment {
                        platform: r.platform,
                        id: r.id,
                        created_at: r.created_at,
                        body: r.body,
                    })
                    .map_err(|e| format!("malformed record: {e}")),
            );
        }
    }

    fn next_csv(&mut self) -> Option<Result<RawComment, String>> {
        let Source::Csv { reader, columns } = &mut self.source else {
            unreachable!()
        };
        let mut row = csv::ByteRecord::new();
        match reader.read_byte_record(&mut row) {
            Ok(false) => return None,
            Ok(true) => {}
            Err(e) => {
                self.record += 1;
                if e.is_io_error() {
                    self.done = true;
                }
                return Some(Err(format!("malformed row: {e}")));
            }
        }
        self.record += 1;
        let mut fields = Vec::with_capacity(4);
        for &c in columns.iter() {
            let Some(raw) = row.get(c) else {
                return Some(Err("missing field".into()));
            };
            match std::str::from_utf8(raw) {
                Ok(s) => fields.push(s.to_string()),
                Err(_) => return Some(Err("not valid UTF-8".into())),
            }
        }
        let [platform, id, created_at, body]: [String; 4] = fields.try_into().expect("four");
        Some(Ok(RawComment {
            platform,
            id,
            created_at,
            body,
        }))
    }
}

impl Iterator for Ingest<'_> {
    type Item = RawComment;

    fn next(&mut self) -> Option<RawComment> {
        while !self.done {
            let next = match self.source {
                Source::Jsonl(_) => self.next_jsonl(),
                Source::Csv { .. } => self.next_csv(),
            };
            match next {
                None => self.done = true,
                Some(Ok(r)) => return Some(r),
                Some(Err(reason)) => self.warn(reason),
            }
        }
        None
    }
}

/// Keep each record independently with probability `fraction`.
pub fn sample<I>(
    records: I,
    fraction: f64,
    seed: u64,
) -> Result<impl Iterator<Item = RawComment>, CorpusError>
where
    I: IntoIterator<Item = RawComment>,
{
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::InvalidFraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .into_iter()
        .filter(move |_| rng.random::<f64>() < fraction))
}

fn parse_bound(s: &str, upper: bool) -> Result<DateTime<Utc>, CorpusError> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| CorpusError::InvalidDate(s.to_string()))?;
    let date = if upper {
        date.succ_opt()
            .ok_or_else(|| CorpusError::InvalidDate(s.to_string()))?
    } else {
        date
    };
    Ok(date.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

fn parse_created(s: &str) -> Option<DateTime<Utc>> {
    parse_bound(s, false).ok()
}

/// Keep records whose `created_at` falls in `[from, to]`. Bounds are RFC 3339
/// timestamps or `YYYY-MM-DD` dates (a date `to` includes the whole day).
/// Records with an unparseable timestamp are dropped.
pub fn created_between<I>(
    records: I,
    from: Option<&str>,
    to: Option<&str>,
) -> Result<impl Iterator<Item = RawComment>, CorpusError>
where
    I: IntoIterator<Item = RawComment>,
{
    let lo = from.map(|s| parse_bound(s, false)).transpose()?;
    let hi = match to {
        Some(s) if DateTime::parse_from_rfc3339(s).is_ok() => Some((parse_bound(s, false)?, true)),
        Some(s) => Some((parse_bound(s, true)?, false)),
        None => None,
    };
    Ok(records.into_iter().filter(move |r| {
        let Some(t) = parse_created(&r.created_at) else {
            return false;
        };
        lo.is_none_or(|lo| t >= lo)
            && hi.is_none_or(|(hi, inclusive)| if inclusive { t <= hi } else { t < hi })
    }))
}
