fn main() {
    std::process::exit(fvre_harness::cli::main_with(std::env::args_os()));
}
