fn main() {
    std::process::exit(benchkeep::cli::run(std::env::args_os()));
}
