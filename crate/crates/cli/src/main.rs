fn main() {
    std::process::exit(higru_cli::run(std::env::args_os()));
}
