fn main() {
    std::process::exit(uqpe::cli::run(std::env::args_os()));
}
