fn main() {
    std::process::exit(cpcbayes::cli::run(std::env::args_os()));
}
