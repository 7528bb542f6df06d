fn main() {
    std::process::exit(density_eval::cli::main());
}
