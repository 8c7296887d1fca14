fn main() {
    std::process::exit(g2cp::cli::main());
}
