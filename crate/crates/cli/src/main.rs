fn main() {
    std::process::exit(sqa_cli::run(std::env::args_os()));
}
