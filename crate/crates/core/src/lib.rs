pub mod backend;
pub mod chunker;
pub mod cli;
pub mod jats;
pub mod lang;
pub mod qa_bench;
pub mod synth;
pub mod translator;
pub mod validator;
