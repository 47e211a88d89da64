fn main() {
    std::process::exit(repstab::cli::main());
}
