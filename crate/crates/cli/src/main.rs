fn main() {
    std::process::exit(skyvault_cli::main_with_args(std::env::args_os()));
}
