fn main() {
    std::process::exit(spir_core::cli::run_command(std::env::args_os()));
}
