fn main() {
    std::process::exit(pdnflow::cli::dispatch(std::env::args_os()));
}
