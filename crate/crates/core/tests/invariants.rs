use std::collections::BTreeMap;

use jats_translate::backend::mock::{self, strip_pseudo_markers, MockSpec};
use jats_translate::chunker::plan;
use jats_translate::jats::{
    extract_units, parse_str, serialize, skeleton, tree_equal, Element, JatsDoc, PreservePolicy,
    UnitPolicy,
};
use jats_translate::qa_bench::{grade, Answer, Quiz};
use jats_translate::synth::{article, SynthOptions};
use jats_translate::translator::{
    latin_tokens, retention_rate, translate_document, TranslationJob,
};
use jats_translate::validator::audit_elements;
use proptest::prelude::*;

fn synth(seed: u64) -> JatsDoc {
    parse_str(&article(seed, &SynthOptions::default())).unwrap()
}

fn remove_first(e: &mut Element, name: &str) -> bool {
    if let Some(i) = e
        .children
        .iter()
        .position(|c| c.as_element().is_some_and(|c| c.name == name))
    {
        e.children.remove(i);
        return true;
    }
    e.children
        .iter_mut()
        .filter_map(|c| c.as_element_mut())
        .any(|c| remove_first(c, name))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_preserves_tree(seed in 0u64..100_000) {
        let doc = synth(seed);
        let again = parse_str(&serialize(&doc)).unwrap();
        prop_assert!(tree_equal(&doc, &again));
        prop_assert_eq!(skeleton(&doc.root), skeleton(&again.root));
    }

    #[test]
    fn pseudo_translation_keeps_skeleton_and_reverses(seed in 0u64..100_000, max in 1usize..6) {
        let src = synth(seed);
        let backend = mock::backend(&MockSpec::pseudo()).unwrap();
        let job = TranslationJob::new("Spanish").with_max_paragraphs(max);
        let out = translate_document(&src, &job, &backend).unwrap();
        prop_assert_eq!(skeleton(&out.doc.root), skeleton(&src.root));
        prop_assert!(out.validate(&src).is_clean());
        prop_assert_eq!(strip_pseudo_markers(&out.doc.text_content(), "xx"), src.text_content());
    }

    #[test]
    fn every_translatable_unit_in_exactly_one_chunk(seed in 0u64..100_000, max in 1usize..6) {
        let doc = synth(seed);
        let p = plan(&doc, max).unwrap();
        for unit in extract_units(&doc, &PreservePolicy::default()) {
            let node = doc.node_at(&unit.path).unwrap();
            if unit.policy != UnitPolicy::Translate || node.is_whitespace_text() {
                continue;
            }
            let covering: Vec<_> = p
                .chunks
                .iter()
                .filter(|c| c.node_paths.iter().any(|np| unit.path.starts_with(np)))
                .collect();
            // a text inside an extracted figure also lies under the marker's slot
            let extracted: Vec<_> = covering.iter().filter(|c| c.marker.is_some()).collect();
            let n = if extracted.is_empty() { covering.len() } else { extracted.len() };
            prop_assert_eq!(n, 1, "unit {:?}", unit.path);
        }
    }

    #[test]
    fn chunks_respect_paragraph_bound(seed in 0u64..100_000, max in 1usize..6) {
        let p = plan(&synth(seed), max).unwrap();
        for c in &p.chunks {
            prop_assert!(c.paragraph_count <= max || c.node_paths.len() == 1,
                "chunk {} holds {} paragraphs over {} nodes", c.index, c.paragraph_count, c.node_paths.len());
        }
    }

    #[test]
    fn grade_counts_exact_matches(
        n in 1usize..60,
        picks in proptest::collection::vec(0u8..8, 60),
    ) {
        let quiz = Quiz::from_json("a", "English", &mock::synth_quiz("p", n).to_string(), Some(n)).unwrap();
        let key = quiz.answer_key();
        let mut answers = BTreeMap::new();
        for (k, &r) in (1..=n).zip(&picks) {
            let a = match r {
                0..=4 => Answer::Letter((b'A' + r) as char),
                5 => Answer::DontKnow,
                6 => Answer::Invalid,
                _ => continue,
            };
            answers.insert(k, a);
        }
        let expected = key.iter().filter(|(k, c)| answers.get(k) == Some(&Answer::Letter(**c))).count();
        let g = grade(&answers, &quiz);
        prop_assert_eq!(g.correct, expected);
        prop_assert!((g.score - expected as f64 / n as f64).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&g.score));
    }

    #[test]
    fn retention_grows_with_kept_tokens(seed in 0u64..100_000, a in 0usize..40, b in 0usize..40) {
        let src = synth(seed).plain_text();
        let toks = latin_tokens(&src);
        let (lo, hi) = (a.min(b).min(toks.len()), a.max(b).min(toks.len()));
        let kept = |k: usize| format!("번역 {}", toks[..k].join(" "));
        let r_lo = retention_rate(&src, &kept(lo)).unwrap();
        let r_hi = retention_rate(&src, &kept(hi)).unwrap();
        prop_assert!(r_lo <= r_hi);
        prop_assert!((0.0..=1.0).contains(&r_hi));
    }

    #[test]
    fn removing_elements_never_lowers_missing(seed in 0u64..100_000, drops in proptest::collection::vec(0usize..3, 0..5)) {
        let src = synth(seed);
        let mut t = src.clone();
        let mut last = audit_elements(&src, &t).total_missing();
        prop_assert_eq!(last, 0);
        for d in drops {
            let name = ["fig", "table-wrap", "disp-formula"][d];
            let removed = remove_first(&mut t.root, name);
            let now = audit_elements(&src, &t).total_missing();
            prop_assert!(now >= last);
            if removed {
                prop_assert_eq!(now, last + 1);
            }
            last = now;
        }
    }
}

#[test]
fn pseudo_wrapping_skips_preserved_text() {
    let src = synth(3);
    let backend = mock::backend(&MockSpec::pseudo()).unwrap();
    let out = translate_document(&src, &TranslationJob::new("Spanish"), &backend).unwrap();
    let refs = out.doc.back().unwrap().first_child("ref-list").unwrap();
    for r in refs.child_elements().filter(|e| e.name == "ref") {
        assert!(!r.text_content().contains("⟦xx:"), "{}", r.text_content());
    }
    let math = out.doc.body().unwrap().count_named("mml:math");
    assert_eq!(math, src.body().unwrap().count_named("mml:math"));
    assert!(out.doc.body().unwrap().text_content().contains("⟦xx:"));
}
