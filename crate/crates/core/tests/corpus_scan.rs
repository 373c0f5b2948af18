use crs_core::corpus::{class_breakdown, ingest, prevalence_rate, scan_corpus, Format};
use crs_core::synth::seeded_corpus;
use crs_core::{Engine, Mode};

#[test]
fn seeded_offensive_records_are_recovered_in_strict_mode() {
    let engine = Engine::builtin().unwrap();
    let corpus = seeded_corpus(2_000, 20, 0.7, 11);
    let (stats, export) = scan_corpus(corpus.records.clone(), &engine, Mode::Strict);
    assert_eq!(stats.total, 2_000);
    assert_eq!(stats.offensive, 20);
    let found: std::collections::BTreeSet<String> = export.iter().map(|r| r.id.clone()).collect();
    assert_eq!(found, corpus.offensive_ids);
    assert_eq!(stats.rate, prevalence_rate(20, 2_000).unwrap());

    let breakdown = class_breakdown(export.iter().map(|r| &r.classes)).unwrap();
    for (c, share) in &stats.per_class {
        assert_eq!(breakdown[c], *share);
    }

    // The export re-scanned is all offensive.
    let again: Vec<_> = corpus
        .records
        .into_iter()
        .filter(|r| found.contains(&r.id))
        .collect();
    let (s2, _) = scan_corpus(again, &engine, Mode::Strict);
    assert_eq!(s2.offensive, s2.total);
}

#[test]
fn clean_corpus_has_zero_rate() {
    let engine = Engine::builtin().unwrap();
    let corpus = seeded_corpus(500, 0, 0.7, 3);
    let (stats, export) = scan_corpus(corpus.records, &engine, Mode::Sensitive);
    assert_eq!(stats.offensive, 0);
    assert_eq!(stats.rate, 0.0);
    assert!(export.is_empty());
}

#[test]
fn jsonl_export_is_deterministic() {
    let engine = Engine::builtin().unwrap();
    let corpus = seeded_corpus(300, 10, 0.7, 8);
    let lines: String = corpus
        .records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    let run = || {
        let it = ingest(lines.as_bytes(), Format::Jsonl).unwrap();
        let (stats, export) = scan_corpus(it, &engine, Mode::Strict);
        (
            serde_json::to_string(&stats).unwrap(),
            serde_json::to_string(&export).unwrap(),
        )
    };
    assert_eq!(run(), run());
}
