fn main() {
    std::process::exit(flowsens_cli::run(std::env::args_os()));
}
