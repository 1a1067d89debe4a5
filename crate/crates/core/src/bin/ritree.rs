fn main() {
    std::process::exit(ritree::cli::main());
}
