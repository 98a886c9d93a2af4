fn main() {
    std::process::exit(gapo::cli::main_entry() as i32)
}
