fn main() {
    let code = superclt_cli::dispatch(std::env::args_os());
    std::process::exit(code);
}
