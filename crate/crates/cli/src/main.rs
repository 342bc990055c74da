fn main() {
    std::process::exit(otlab_cli::run(std::env::args_os()));
}
