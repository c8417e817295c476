fn main() {
    std::process::exit(shiftlearn_cli::run(std::env::args_os()));
}
