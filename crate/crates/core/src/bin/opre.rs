fn main() {
    std::process::exit(opre::cli::main());
}
