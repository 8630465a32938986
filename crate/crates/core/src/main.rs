fn main() {
    std::process::exit(gyrobs::cli::main());
}
