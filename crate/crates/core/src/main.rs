fn main() {
    std::process::exit(pbnco::cli::main_entry());
}
