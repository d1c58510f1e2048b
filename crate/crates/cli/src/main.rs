fn main() {
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = cvgate_cli::run(std::env::args_os().skip(1), &mut out, &mut err);
    std::process::exit(code);
}
