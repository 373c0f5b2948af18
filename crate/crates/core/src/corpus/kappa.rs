use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Format};
use crate::{ClassSet, OffenceClass};

/// One annotator's labels: comment id to offence classes (empty = clean).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotationFile {
    pub labels: BTreeMap<String, ClassSet>,
}

impl AnnotationFile {
    pub fn insert(&mut self, id: impl Into<String>, classes: ClassSet) -> Result<(), CorpusError> {
        let id = id.into();
        if self.labels.contains_key(&id) {
            return Err(CorpusError::InvalidAnnotations(format!(
                "duplicate id {id:?}"
            )));
        }
        self.labels.insert(id, classes);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl FromIterator<(String, ClassSet)> for AnnotationFile {
    fn from_iter<T: IntoIterator<Item = (String, ClassSet)>>(iter: T) -> Self {
        AnnotationFile {
            labels: iter.into_iter().collect(),
        }
    }
}

#[derive(Deserialize)]
struct AnnotationRecord {
    id: String,
    #[serde(default)]
    labels: Vec<String>,
}

fn parse_classes(labels: impl IntoIterator<Item = String>) -> Result<ClassSet, CorpusError> {
    labels
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<OffenceClass>()
                .map_err(|e| CorpusError::InvalidAnnotations(e.to_string()))
        })
        .collect()
}

/// JSONL lines `{"id": .., "labels": [..]}` or CSV with header `id,labels`
/// where labels are `|`-separated.
pub fn load_annotations(
    mut source: impl Read,
    format: Format,
) -> Result<AnnotationFile, CorpusError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| CorpusError::UnreadableSource(e.to_string()))?;
    let mut file = AnnotationFile::default();
    match format {
        Format::Jsonl => {
            for (i, line) in text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
            {
                let r: AnnotationRecord = serde_json::from_str(line)
                    .map_err(|e| CorpusError::InvalidAnnotations(format!("line {}: {e}", i + 1)))?;
                file.insert(r.id, parse_classes(r.labels)?)?;
            }
        }
        Format::Csv => {
            let mut reader = csv::Reader::from_reader(text.as_bytes());
            let headers = reader
                .headers()
                .map_err(|e| CorpusError::InvalidAnnotations(e.to_string()))?
                .clone();
            let col = |name: &str| {
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| {
                        CorpusError::InvalidAnnotations(format!("CSV header lacks column {name:?}"))
                    })
            };
            let (id_col, label_col) = (col("id")?, col("labels")?);
            for row in reader.records() {
                let row = row.map_err(|e| CorpusError::InvalidAnnotations(e.to_string()))?;
                let id = row.get(id_col).unwrap_or_default();
                let labels = row.get(label_col).unwrap_or_default();
                file.insert(id, parse_classes(labels.split('|').map(str::to_string))?)?;
            }
        }
    }
    Ok(file)
}

/// Categorical view of a label set compared between annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projection {
    /// Offensive (any class) versus clean.
    #[default]
    Offensive,
    /// Carries the class versus not.
    Class(OffenceClass),
    /// The exact label set is the category.
    LabelSet,
}

impl Projection {
    fn category(self, classes: &ClassSet) -> String {
        match self {
            Projection::Offensive => (!classes.is_empty()).to_string(),
            Projection::Class(c) => classes.contains(&c).to_string(),
            Projection::LabelSet => crate::pipeline::class_list(classes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub items: usize,
}

/// Two-rater Cohen's kappa, `(po - pe) / (1 - pe)`, evaluated from integer
/// counts as `(n*agree - S) / (n^2 - S)` with `S = sum_k a_k * b_k`.
pub fn cohen_kappa(
    a: &AnnotationFile,
    b: &AnnotationFile,
    projection: Projection,
) -> Result<KappaResult, CorpusError> {
    if !a.labels.keys().eq(b.labels.keys()) {
        let only_a = a
            .labels
            .keys()
            .filter(|k| !b.labels.contains_key(*k))
            .count();
        let only_b = b
            .labels
            .keys()
            .filter(|k| !a.labels.contains_key(*k))
            .count();
        return Err(CorpusError::IdMismatch(format!(
            "{only_a} ids only in the first file, {only_b} only in the second"
        )));
    }
    let n = a.len() as u128;
    if n == 0 {
        return Err(CorpusError::InvalidAnnotations("no annotated items".into()));
    }
    let mut agree: u128 = 0;
    let mut margins: BTreeMap<String, (u128, u128)> = BTreeMap::new();
    for (id, la) in &a.labels {
        let ca = projection.category(la);
        let cb = projection.category(&b.labels[id]);
        if ca == cb {
            agree += 1;
        }
        margins.entry(ca).or_default().0 += 1;
        margins.entry(cb).or_default().1 += 1;
    }
    let s: u128 = margins.values().map(|&(x, y)| x * y).sum();
    let nn = n * n;
    if s == nn {
        return Err(CorpusError::DegenerateMarginals);
    }
    let num = (n * agree) as i128 - s as i128;
    let den = (nn - s) as i128;
    Ok(KappaResult {
        kappa: num as f64 / den as f64,
        observed_agreement: agree as f64 / n as f64,
        expected_agreement: s as f64 / nn as f64,
        items: n as usize,
    })
}
