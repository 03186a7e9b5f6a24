fn main() {
    std::process::exit(cgns::cli::run(std::env::args_os()));
}
