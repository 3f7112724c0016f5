fn main() {
    std::process::exit(clinlm_cli::main_with(std::env::args_os()));
}
