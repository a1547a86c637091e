fn main() {
    std::process::exit(sps_ems::cli::main_with_args(std::env::args_os()));
}
