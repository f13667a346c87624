fn main() {
    std::process::exit(avse::cli::main_with_args(std::env::args_os().collect()));
}
