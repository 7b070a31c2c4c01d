fn main() {
    std::process::exit(gkp_ftqc::cli::run(std::env::args_os()));
}
