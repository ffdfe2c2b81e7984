fn main() {
    std::process::exit(pvd::cli::main());
}
