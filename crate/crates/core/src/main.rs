fn main() {
    std::process::exit(lumiprobe::cli::run(std::env::args_os()));
}
