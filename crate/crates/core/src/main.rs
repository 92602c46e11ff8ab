fn main() {
    std::process::exit(landau_hermite::cli::run(std::env::args_os()));
}
