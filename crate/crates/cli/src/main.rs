fn main() {
    std::process::exit(hobz_cli::run(std::env::args_os()));
}
