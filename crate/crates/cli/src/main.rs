fn main() {
    std::process::exit(llgas_cli::cli_main(std::env::args_os()));
}
