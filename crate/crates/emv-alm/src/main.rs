fn main() {
    std::process::exit(emv_alm::cli::main_with(std::env::args_os()));
}
