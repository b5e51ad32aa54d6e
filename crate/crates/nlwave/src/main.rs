fn main() {
    std::process::exit(nlwave::cli::main_with(std::env::args_os()));
}
