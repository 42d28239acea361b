//! A small benchmark campaign through the command-line entry point: two
//! articles, two languages, one mock backend. Running it twice shows that
//! the second run is served entirely from the run manifest.
//!
//!     cargo run --example campaign [run-dir]

use std::path::PathBuf;

use jats_translate::backend::mock::{AnswerScript, MockSpec};
use jats_translate::backend::BackendConfig;
use jats_translate::cli;

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let work = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            std::env::temp_dir().join(format!("jats-mt-campaign-{}", std::process::id()))
        });
    let articles = work.join("articles");
    std::fs::create_dir_all(&articles).unwrap();
    for name in ["sleep-memory.xml", "urban-heat.xml"] {
        std::fs::copy(
            root.join("fixtures/articles").join(name),
            articles.join(name),
        )
        .unwrap();
    }
    let config = work.join("mock.json");
    let spec = MockSpec::Pseudo {
        marker: "xx".into(),
        compress: 1.0,
        answers: AnswerScript::oracle(),
    };
    std::fs::write(
        &config,
        serde_json::to_string_pretty(&BackendConfig::mock("mock", spec)).unwrap(),
    )
    .unwrap();

    let run_dir = work.join("run");
    let args = [
        "jats-mt",
        "bench",
        articles.to_str().unwrap(),
        "--langs",
        "Spanish,Japanese",
        "--backends",
        config.to_str().unwrap(),
        "--questions",
        "10",
        "--out",
        run_dir.to_str().unwrap(),
    ];
    let first = cli::run(args);
    println!(
        "first run:  exit {} with {} backend calls",
        first.code, first.backend_calls
    );
    let second = cli::run(args);
    println!(
        "second run: exit {} with {} backend calls",
        second.code, second.backend_calls
    );
    println!(
        "{}",
        std::fs::read_to_string(run_dir.join("reports/bench.csv")).unwrap()
    );
    println!("run directory: {}", run_dir.display());
}
