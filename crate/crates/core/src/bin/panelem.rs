fn main() {
    let code = panelem::cli::run(std::env::args_os());
    std::process::exit(code);
}
