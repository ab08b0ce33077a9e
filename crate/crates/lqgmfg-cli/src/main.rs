fn main() {
    std::process::exit(lqgmfg_cli::main_with(std::env::args_os()));
}
