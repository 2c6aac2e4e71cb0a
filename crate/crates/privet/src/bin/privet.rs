fn main() {
    std::process::exit(privet::cli::run(std::env::args_os()));
}
