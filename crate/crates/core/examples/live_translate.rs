//! Translate one short article with a real chat-completions endpoint and run
//! the quiz on the result. Skips unless `JATS_MT_LIVE_CONFIG` names a backend
//! config file; the API key is read from the variable the config names
//! (`OPENAI_API_KEY` by default).
//!
//!     JATS_MT_LIVE_CONFIG=backend.json cargo run --example live_translate [language]

use std::path::PathBuf;

use jats_translate::backend::{build_backend, BackendConfig, PromptCatalog};
use jats_translate::jats::parse;
use jats_translate::qa_bench::{generate_quiz, run_quiz, translate_quiz};
use jats_translate::translator::{translate_document, TranslationJob};

fn main() {
    let Ok(cfg_path) = std::env::var("JATS_MT_LIVE_CONFIG") else {
        println!("JATS_MT_LIVE_CONFIG is not set; skipping live translation");
        return;
    };
    let lang = std::env::args().nth(1).unwrap_or_else(|| "Spanish".into());
    let cfg_path = PathBuf::from(cfg_path);
    let cfg = BackendConfig::load(&cfg_path).expect("backend config");
    let backend = build_backend(&cfg, cfg_path.parent().unwrap_or(std::path::Path::new(".")))
        .expect("backend");
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let source =
        parse(&std::fs::read(root.join("fixtures/articles/sleep-memory.xml")).unwrap()).unwrap();
    let catalog = PromptCatalog::builtin();

    let out = translate_document(&source, &TranslationJob::new(lang.clone()), &*backend)
        .expect("translation");
    let report = out.validate(&source);
    println!("validation: {:?}", report.verdict);

    let quiz = generate_quiz(
        "sleep-memory",
        &source.plain_text(),
        &*backend,
        20,
        &catalog,
    )
    .expect("quiz");
    let quiz_t = translate_quiz(&quiz, &lang, &*backend, &catalog).expect("quiz translation");
    let run = run_quiz(
        &quiz_t,
        &out.doc.plain_text(),
        Some(&lang),
        &*backend,
        &catalog,
    )
    .expect("quiz run");
    println!("quiz score: {:.1}%", run.score * 100.0);
}
