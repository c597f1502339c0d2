fn main() {
    std::process::exit(tclevy::cli::run(std::env::args_os()));
}
