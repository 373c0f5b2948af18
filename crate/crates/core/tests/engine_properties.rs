use std::sync::OnceLock;

use crs_core::normalize::{normalize, NormalizeOptions};
use crs_core::paraphrase::apply_changes;
use crs_core::rules::RuleSet;
use crs_core::scoring::{score_local, ToxicityLexicon};
use crs_core::sentiment::ValenceLexicon;
use crs_core::synth::{offensive_terms, Synth};
use crs_core::{Engine, Mode, Verdict};
use proptest::prelude::*;

fn engine() -> &'static Engine {
    static E: OnceLock<Engine> = OnceLock::new();
    E.get_or_init(|| Engine::builtin().unwrap())
}

fn norm(s: &str) -> crs_core::NormalizedText {
    normalize(s, &NormalizeOptions::default()).unwrap()
}

#[test]
fn every_lexicon_term_is_rule_covered() {
    let rules = RuleSet::builtin();
    let lex = ToxicityLexicon::builtin();
    let covered = offensive_terms(&rules, &lex, 0.0);
    let missing: Vec<&str> = lex
        .iter()
        .map(|(t, _)| t)
        .filter(|t| !covered.iter().any(|c| c.term == *t))
        .collect();
    assert!(missing.is_empty(), "not rule-covered: {missing:?}");
}

#[test]
fn valence_lexicon_negation_flips() {
    let lex = ValenceLexicon::builtin();
    let mut checked = 0;
    for (term, v) in lex.valences() {
        if v.abs() < 0.1 || lex.is_negator(term) || lex.booster(term).is_some() {
            continue;
        }
        let plain = crs_core::sentiment::analyze_sentiment(&norm(term), &lex).compound;
        let negated =
            crs_core::sentiment::analyze_sentiment(&norm(&format!("not {term}")), &lex).compound;
        if plain == 0.0 {
            continue;
        }
        assert!(
            plain.signum() != negated.signum(),
            "{term}: {plain} vs {negated}"
        );
        checked += 1;
    }
    assert!(checked > 1000);
}

#[test]
fn reference_sentences() {
    let e = engine();
    assert_eq!(
        e.analyze("thanks, that fixed it").unwrap().verdict,
        Verdict::Clean
    );
    let body = "Stop pushing this sh!t, you a$$hole";
    let r = e.analyze(body).unwrap();
    assert_eq!(r.verdict, Verdict::Offensive);
    let surfaces: Vec<&str> = r.matches.iter().map(|m| m.span.slice(body)).collect();
    assert!(surfaces.contains(&"a$$hole"), "{surfaces:?}");
    assert_eq!(r.suggestions.len(), 3);
}

#[test]
fn code_is_not_flagged() {
    let r = engine()
        .analyze("run `pkill -9 dummy` then kill the process, abort if it hangs")
        .unwrap();
    assert_eq!(r.verdict, Verdict::Clean, "{:?}", r.matches);
}

#[test]
fn paraphrase_safety_and_score_reduction() {
    let e = engine();
    let rules = RuleSet::builtin();
    let lex = ToxicityLexicon::builtin();
    let mut synth = Synth::builtin(0.0, 99);
    synth.obfuscation = 0.3;
    synth.shouting = 0.1;
    for _ in 0..300 {
        let (text, _) = synth.offensive_comment();
        let r = e.analyze(&text).unwrap();
        assert_eq!(r.verdict, Verdict::Offensive, "{text}");
        let before = score_local(&norm(&text), &lex).value;
        for s in &r.suggestions {
            let n = norm(&s.text);
            assert!(rules.is_clean(&n), "{text:?} -> {:?}", s.text);
            assert!(
                score_local(&n, &lex).value < before,
                "{text:?} -> {:?}",
                s.text
            );
            assert_eq!(apply_changes(&text, &s.changed_spans), s.text);
        }
    }
}

#[test]
fn rule_only_offence_reanalyses_clean() {
    let e = engine();
    let mut synth = Synth::builtin(0.0, 5);
    for _ in 0..200 {
        let (text, _) = synth.offensive_comment();
        let r = e.analyze(&text).unwrap();
        for s in &r.suggestions {
            let again = e.analyze_with(&s.text, Mode::Sensitive).unwrap();
            assert_eq!(again.verdict, Verdict::Clean, "{text:?} -> {:?}", s.text);
        }
    }
}

#[test]
fn synonym_and_mask_keep_words_outside_spans() {
    let e = engine();
    let text = "I don't think you read it, you idiot, so please don't merge";
    let r = e.analyze(text).unwrap();
    for s in &r.suggestions[..2] {
        for c in &s.changed_spans {
            assert!(r.matches.iter().any(|m| c.span.overlaps(&m.span)));
        }
        assert!(s.text.starts_with("I don't think you read it, you "));
        assert!(s.text.ends_with(", so please don't merge"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strict_implies_sensitive(seed in any::<u64>(), offensive in any::<bool>()) {
        let mut synth = Synth::builtin(0.0, seed);
        synth.obfuscation = 0.5;
        let text = if offensive { synth.offensive_comment().0 } else { synth.clean_comment() };
        let strict = engine().analyze_with(&text, Mode::Strict).unwrap();
        let sensitive = engine().analyze_with(&text, Mode::Sensitive).unwrap();
        if strict.verdict.is_offensive() {
            prop_assert!(sensitive.verdict.is_offensive());
        }
    }

    #[test]
    fn report_invariants(text in "[a-zA-Z$@!0-9 ,.'`]{0,80}") {
        let r = engine().analyze(&text).unwrap();
        prop_assert_eq!(r.verdict.is_offensive(), !r.classes.is_empty());
        prop_assert_eq!(r.suggestions.len(), if r.verdict.is_offensive() { 3 } else { 0 });
        for m in &r.matches {
            prop_assert_eq!(m.span.slice(&text), m.surface.as_str());
        }
        for s in &r.suggestions {
            prop_assert!(RuleSet::builtin().is_clean(&norm(&s.text)));
        }
    }

    #[test]
    fn spans_round_trip_on_multibyte(prefix in "[äöü日本 ]{0,6}", suffix in "[ ✓é漢 ]{0,6}") {
        let text = format!("{prefix} you idiot {suffix}");
        let r = engine().analyze(&text).unwrap();
        prop_assert!(!r.matches.is_empty());
        for m in &r.matches {
            prop_assert_eq!(m.span.slice(&text), m.surface.as_str());
        }
    }
}
