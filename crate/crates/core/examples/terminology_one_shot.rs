//! Terminology handling: the bundled Korean one-shot example, the retention
//! rate of English terms it demonstrates, and a term-consistency report for a
//! translation whose chunks disagree on one term.
//!
//!     cargo run --example terminology_one_shot

use jats_translate::backend::mock::{MockSpec, ScriptFixture};
use jats_translate::backend::{build_backend, BackendConfig};
use jats_translate::chunker::plan_with_policy;
use jats_translate::jats::parse_str;
use jats_translate::jats::serialize_nodes;
use jats_translate::translator::{
    apply_one_shot, mask, retention_rate, term_consistency_report, translate_document,
    OneShotExample, TranslationJob,
};

const ARTICLE: &str = r#"<article><body><sec><title>Results</title>
<p>The bandgap of the monolayer was measured twice.</p>
<p>A second sample showed the same bandgap within error.</p>
<p>Other samples were measured within the same error.</p>
</sec></body></article>"#;

fn main() {
    let example = OneShotExample::bundled_korean();
    let rate = retention_rate(&example.source_excerpt, &example.curated_translation).unwrap();
    println!(
        "curated example keeps {:.1}% of English word tokens",
        rate * 100.0
    );

    let job = TranslationJob::new("Korean")
        .with_one_shot(example)
        .with_max_paragraphs(1);
    let shot = apply_one_shot(&job).unwrap();
    println!(
        "one-shot exchange adds {} messages ahead of each chunk",
        shot.len()
    );

    // Scripted Spanish replies: the first chunk keeps "bandgap", the second
    // translates it. The third paragraph lacks the term and shows which
    // words are ordinary vocabulary.
    let job = TranslationJob::new("Spanish").with_max_paragraphs(1);
    let source = parse_str(ARTICLE).unwrap();
    let plan = plan_with_policy(&source, 1, &job.preserve).unwrap();
    let mut fixture = ScriptFixture::default();
    let replies = [
        "<title>Resultados</title>\n<p>El bandgap de la monocapa se midió dos veces.</p>\n",
        "<p>Una segunda muestra mostró la misma brecha dentro del error.</p>\n",
        "<p>Otras muestras se midieron dentro del mismo error.</p>\n",
    ];
    for (chunk, reply) in plan.chunks.iter().zip(replies) {
        let (masked, _) = mask(&chunk.nodes, chunk.inherited_policy, &job.preserve);
        let payload = serialize_nodes(&masked);
        fixture
            .by_key
            .insert(jats_translate::backend::sha256_hex(&payload), reply.into());
    }
    let dir = std::env::temp_dir().join(format!("jats-mt-terms-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(
        dir.join("script.json"),
        serde_json::to_string(&fixture).unwrap(),
    )
    .unwrap();
    let cfg = BackendConfig::mock(
        "scripted",
        MockSpec::Scripted {
            fixture: "script.json".into(),
            fallback: Some(Box::new(MockSpec::identity())),
        },
    );
    let backend = build_backend(&cfg, &dir).unwrap();
    let out = translate_document(&source, &job, &*backend).unwrap();
    let watch = vec!["bandgap".to_string()];
    let report = term_consistency_report(&out, Some(&watch));
    for (term, variants) in &report.terms {
        for v in variants {
            println!(
                "{term:>10} -> {:<10} x{} in chunks {:?}",
                v.translation, v.count, v.chunks
            );
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
}
