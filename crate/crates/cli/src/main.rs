fn main() {
    std::process::exit(locint_cli::run(std::env::args_os()));
}
