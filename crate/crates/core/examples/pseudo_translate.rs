//! Translate an article with the pseudo-translation mock, which wraps every
//! translated text span in a visible marker, then validate the result.
//! No network access is needed.
//!
//!     cargo run --example pseudo_translate [article.xml] [language]

use std::path::PathBuf;

use jats_translate::backend::mock::{self, MockSpec};
use jats_translate::jats::parse;
use jats_translate::translator::{translate_document, TranslationJob};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/articles/sleep-memory.xml")
    });
    let lang = args.next().unwrap_or_else(|| "Spanish".into());
    let source =
        parse(&std::fs::read(&path).expect("readable article")).expect("well-formed article");

    let backend = mock::backend(&MockSpec::pseudo()).expect("mock");
    let job = TranslationJob::new(lang);
    let out = translate_document(&source, &job, &backend).expect("translation");
    let report = out.validate(&source);

    let sample = out.chunks.iter().flat_map(|c| &c.segments).nth(3);
    if let Some(s) = sample {
        println!("source:     {}", s.source);
        println!("translated: {}", s.translated);
    }
    println!(
        "chunks={} calls={} retention={:.3}",
        out.metrics.chunk_count,
        out.metrics.backend_calls,
        out.metrics.retention_rate.unwrap_or(f64::NAN)
    );
    println!("verdict: {:?}", report.verdict);
    println!("root language: {:?}", out.doc.root.attr("xml:lang"));
}
