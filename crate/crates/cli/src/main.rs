fn main() {
    std::process::exit(liesym_cli::dispatch(std::env::args_os()));
}
