fn main() {
    std::process::exit(mtsx::cli::run(std::env::args().collect()));
}
