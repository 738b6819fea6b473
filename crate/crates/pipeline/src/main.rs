fn main() {
    if let Err(e) = creditline_pipeline::cli::run_cli(std::env::args_os()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
