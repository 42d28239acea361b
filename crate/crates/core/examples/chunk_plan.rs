//! Show how an article is split into chunks: figures and tables are lifted
//! out behind marker comments, and paragraphs are grouped a few at a time.
//!
//!     cargo run --example chunk_plan [article.xml] [max_paragraphs]

use std::path::PathBuf;

use jats_translate::chunker::{plan, reassemble};
use jats_translate::jats::{parse, tree_equal};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/articles/coral-bleaching.xml")
    });
    let max: usize = args
        .next()
        .map(|s| s.parse().expect("max_paragraphs is a number"))
        .unwrap_or(5);
    let doc = parse(&std::fs::read(&path).expect("readable article")).expect("well-formed article");
    let p = plan(&doc, max).expect("plan");

    println!("{} chunks (at most {max} paragraphs each)", p.chunks.len());
    for c in &p.chunks {
        let preview: String = c.fragment.chars().take(70).collect();
        println!(
            "  #{:<3} {:<8} paras={:<2} bytes={:<6} {}",
            c.index,
            format!("{:?}", c.kind).to_lowercase(),
            c.paragraph_count,
            c.fragment.len(),
            preview.replace('\n', " ")
        );
    }
    println!("extracted: {}", serde_json::to_string(&p.manifest).unwrap());

    // Feeding the source fragments back must rebuild the original tree.
    let rebuilt = reassemble(&p, &p.identity_fragments()).expect("identity reassembly");
    println!(
        "identity reassembly equal to source: {}",
        tree_equal(&doc, &rebuilt)
    );
}
