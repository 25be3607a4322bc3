fn main() {
    std::process::exit(visuomotor::cli::main());
}
