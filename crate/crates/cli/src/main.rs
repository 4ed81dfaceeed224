fn main() {
    std::process::exit(ftclust_cli::main_with(std::env::args_os()));
}
