fn main() {
    let root = bgforecast_cli::current_dir();
    std::process::exit(bgforecast_cli::run(std::env::args_os(), &root));
}
