fn main() {
    std::process::exit(crosstopic_cli::main_with_args(std::env::args_os()));
}
