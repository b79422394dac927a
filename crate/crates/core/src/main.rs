fn main() {
    std::process::exit(hyperball::cli::main_with_args(std::env::args()));
}
