fn main() {
    std::process::exit(depthlab::cli::run(std::env::args_os()));
}
