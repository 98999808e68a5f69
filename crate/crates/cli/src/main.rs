fn main() {
    std::process::exit(svrbench::run_command(std::env::args_os()));
}
