fn main() {
    std::process::exit(wazewski::cli::run(std::env::args_os()));
}
