fn main() {
    std::process::exit(abstractor::cli::run(std::env::args_os()));
}
