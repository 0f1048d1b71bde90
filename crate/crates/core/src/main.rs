fn main() {
    std::process::exit(invex::cli::main());
}
