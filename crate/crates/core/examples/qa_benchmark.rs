//! The QA benchmark end to end on a mock model: write a quiz about an
//! article, check it cannot be answered blind, translate article and quiz,
//! answer, grade and aggregate. Finishes by aggregating the bundled
//! six-article score table.
//!
//!     cargo run --example qa_benchmark

use std::path::PathBuf;

use jats_translate::backend::mock::{self, AnswerScript, MockSpec};
use jats_translate::backend::PromptCatalog;
use jats_translate::jats::parse;
use jats_translate::qa_bench::{
    aggregate, cells_from_csv, contamination_check, generate_quiz, run_quiz, translate_quiz, Cell,
};
use jats_translate::translator::{translate_document, TranslationJob};

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let source =
        parse(&std::fs::read(root.join("fixtures/articles/glacier-retreat.xml")).unwrap()).unwrap();
    let catalog = PromptCatalog::builtin();

    // The oracle mock recomputes the answer key of the quizzes it writes, so
    // a perfect translation scores 100%.
    let model = mock::backend(&MockSpec::Pseudo {
        marker: "es".into(),
        compress: 1.0,
        answers: AnswerScript::oracle(),
    })
    .unwrap();

    let quiz = generate_quiz(
        "glacier-retreat",
        &source.plain_text(),
        &model,
        20,
        &catalog,
    )
    .unwrap();
    let q1 = &quiz.questions[&1];
    println!("Q1: {}", q1.stem);
    for option in &q1.options {
        println!("   {option}");
    }

    let (passed, blind) = contamination_check(&quiz, &model, &catalog).unwrap();
    println!(
        "contamination check passed: {passed} (blind score {:.0}%)",
        blind.score * 100.0
    );

    let translated = translate_document(&source, &TranslationJob::new("Spanish"), &model).unwrap();
    let quiz_es = translate_quiz(&quiz, "Spanish", &model, &catalog).unwrap();
    println!("translated Q1: {}", quiz_es.questions[&1].stem);

    let run = run_quiz(
        &quiz_es,
        &translated.doc.plain_text(),
        Some("Spanish"),
        &model,
        &catalog,
    )
    .unwrap();
    let base = run_quiz(&quiz, &source.plain_text(), None, &model, &catalog).unwrap();
    println!(
        "Spanish score {:.1}%, English baseline {:.1}%",
        run.score * 100.0,
        base.score * 100.0
    );

    let report = aggregate(&[
        Cell::from_run(&run, "mock", false),
        Cell::from_run(&base, "original", true),
    ])
    .unwrap();
    print!("{}", report.to_csv());

    let table =
        std::fs::read_to_string(root.join("fixtures/aggregation/six_article_study.csv")).unwrap();
    let study = aggregate(&cells_from_csv(&table).unwrap()).unwrap();
    let (lo, hi) = study
        .per_language
        .iter()
        .fold((("", 1.0), ("", 0.0)), |(lo, hi), (l, s)| {
            (
                if *s < lo.1 { (l.as_str(), *s) } else { lo },
                if *s > hi.1 { (l.as_str(), *s) } else { hi },
            )
        });
    println!(
        "six-article table: {} cells, mean {:.2}% ({:.2}% with baseline), baseline {:.2}%",
        study.cells.len(),
        study.overall_average * 100.0,
        study.overall_with_baseline * 100.0,
        study
            .baseline
            .as_ref()
            .map(|b| b.average * 100.0)
            .unwrap_or(f64::NAN)
    );
    println!(
        "lowest {} {:.2}%, highest {} {:.2}%",
        lo.0,
        lo.1 * 100.0,
        hi.0,
        hi.1 * 100.0
    );
    let worst = study
        .question_errors
        .iter()
        .max_by_key(|q| q.incorrect)
        .unwrap();
    println!(
        "most-missed question: {} #{} ({} cells)",
        worst.article, worst.question, worst.incorrect
    );
}
