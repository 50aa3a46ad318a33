fn main() {
    std::process::exit(safeflow::cli::main_with(std::env::args_os()));
}
