fn main() {
    std::process::exit(porecryst::cli::main_entry());
}
