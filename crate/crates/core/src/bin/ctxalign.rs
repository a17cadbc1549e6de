fn main() {
    std::process::exit(ctxalign::cli::run(std::env::args_os()));
}
