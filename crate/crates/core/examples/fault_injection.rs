//! Inject truncation, dropped elements and re-nesting into chunk replies on
//! a seeded synthetic corpus, and count how many the validator catches.
//!
//!     cargo run --release --example fault_injection [documents] [seed]

use jats_translate::backend::mock::{self, MockSpec};
use jats_translate::jats::parse_str;
use jats_translate::synth::{corpus, SynthOptions};
use jats_translate::translator::{translate_document, TranslationJob};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map(|s| s.parse().expect("document count"))
        .unwrap_or(100);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(7);
    let job = TranslationJob::new("French");

    let (mut faulted_docs, mut caught, mut injected, mut clean_flagged) = (0, 0, 0, 0);
    for (i, (id, xml)) in corpus(seed, n, &SynthOptions::default())
        .into_iter()
        .enumerate()
    {
        let source = parse_str(&xml).expect("generated article parses");
        let faulty = mock::backend(&MockSpec::Faulty {
            inner: Box::new(MockSpec::identity()),
            seed: seed + i as u64,
            truncate_rate: 0.05,
            drop_rate: 0.03,
            nest_rate: 0.03,
            forced: Default::default(),
        })
        .expect("mock");
        let out = translate_document(&source, &job, &faulty).expect("lenient translation");
        let report = out.validate(&source);
        let applied: Vec<_> = faulty
            .fault_log()
            .into_iter()
            .filter(|r| r.applied)
            .collect();
        injected += applied.len();
        if !applied.is_empty() {
            faulted_docs += 1;
            if !report.is_clean() {
                caught += 1;
            } else {
                println!("missed: {id} {applied:?}");
            }
        } else if !report.is_clean() {
            clean_flagged += 1;
        }
    }
    println!("documents: {n}  faults injected: {injected}");
    println!("faulted documents flagged: {caught}/{faulted_docs}");
    println!("fault-free documents flagged: {clean_flagged}");
}
