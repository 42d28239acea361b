fn main() {
    std::process::exit(jats_translate::cli::run(std::env::args_os()).code);
}
