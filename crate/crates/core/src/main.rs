fn main() {
    std::process::exit(longrange_mf::cli::main_exit_code());
}
