fn main() {
    let code = avrc_cli::commands::main_with_args(std::env::args().collect());
    std::process::exit(code);
}
