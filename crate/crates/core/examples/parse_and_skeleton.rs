//! Parse every bundled article, serialize it, parse it again and compare the
//! two trees, then print a short structural summary.
//!
//!     cargo run --example parse_and_skeleton [article.xml ...]

use std::path::PathBuf;

use jats_translate::jats::{
    extract_units, parse, serialize, skeleton, tree_equal, PreservePolicy, UnitPolicy, XmlNode,
};

fn main() {
    let mut paths: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/articles");
        paths = std::fs::read_dir(dir)
            .expect("fixture directory")
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "xml"))
            .collect();
        paths.sort();
    }
    println!(
        "{:<28} {:>6} {:>5} {:>5} {:>5} {:>6} {:>9}",
        "article", "elems", "figs", "tabs", "eqs", "units", "roundtrip"
    );
    for p in paths {
        let bytes = std::fs::read(&p).expect("readable file");
        let doc = match parse(&bytes) {
            Ok(d) => d,
            Err(e) => {
                println!("{}: {e}", p.display());
                continue;
            }
        };
        let text = serialize(&doc);
        let again = parse(text.as_bytes()).expect("serializer output parses");
        let same_tree = tree_equal(&doc, &again) && skeleton(&doc.root) == skeleton(&again.root);
        // Character references come back as the characters they denote.
        let same_bytes = text.as_bytes() == bytes.as_slice();
        let units = extract_units(&doc, &PreservePolicy::default());
        let translatable = units
            .iter()
            .filter(|u| u.policy == UnitPolicy::Translate)
            .count();
        println!(
            "{:<28} {:>6} {:>5} {:>5} {:>5} {:>6} {:>9}",
            p.file_stem().unwrap().to_string_lossy(),
            XmlNode::from(doc.root.clone()).element_count(),
            doc.root.count_named("fig"),
            doc.root.count_named("table-wrap"),
            doc.root.count_named("disp-formula"),
            translatable,
            match (same_tree, same_bytes) {
                (true, true) => "bytes",
                (true, false) => "tree",
                _ => "DIFFERS",
            }
        );
    }
}
