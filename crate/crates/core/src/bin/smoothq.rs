fn main() {
    std::process::exit(smoothq::cli::cli_main(std::env::args_os()));
}
