fn main() {
    std::process::exit(sqv_cli::run(std::env::args_os()));
}
