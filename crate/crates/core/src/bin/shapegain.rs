fn main() {
    let code = shapegain::cli::run(std::env::args_os());
    std::process::exit(code);
}
