fn main() {
    std::process::exit(msl_core::expcli::cli_main(std::env::args_os()));
}
