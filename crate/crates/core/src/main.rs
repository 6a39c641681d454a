fn main() {
    std::process::exit(casotto::cli::main_with(std::env::args_os()));
}
