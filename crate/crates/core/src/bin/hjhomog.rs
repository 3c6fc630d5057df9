fn main() {
    std::process::exit(hjhomog::cli::main_from(std::env::args_os()));
}
