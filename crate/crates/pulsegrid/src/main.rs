fn main() {
    std::process::exit(pulsegrid::cli::main_impl(std::env::args_os()));
}
