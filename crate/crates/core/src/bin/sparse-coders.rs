fn main() {
    std::process::exit(sparse_coders::cli::run(std::env::args_os()));
}
