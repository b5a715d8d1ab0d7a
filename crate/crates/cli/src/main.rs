fn main() {
    std::process::exit(deepesn_cli::main_with(std::env::args_os()));
}
