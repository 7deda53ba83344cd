fn main() {
    env_logger::init();
    std::process::exit(gsrelight::cli::run(std::env::args_os()));
}
