fn main() {
    std::process::exit(coverplan::cli::main(std::env::args_os()));
}
