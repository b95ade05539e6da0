fn main() {
    std::process::exit(hybridcop::cli::run(std::env::args_os()));
}
