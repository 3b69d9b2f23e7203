fn main() {
    std::process::exit(ortho_spectral::cli::run(std::env::args_os()));
}
