fn main() {
    std::process::exit(icechron::cli::cli_main(std::env::args_os()));
}
