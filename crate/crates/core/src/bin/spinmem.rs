fn main() {
    std::process::exit(spinmem::cli::run(std::env::args_os()));
}
