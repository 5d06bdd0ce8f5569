fn main() {
    std::process::exit(wealthdyn::cli::main_with_args(std::env::args_os()));
}
