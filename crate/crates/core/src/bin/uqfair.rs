fn main() {
    std::process::exit(uqfair::cli::run(std::env::args_os()));
}
