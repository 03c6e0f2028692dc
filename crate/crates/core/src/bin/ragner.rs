fn main() {
    std::process::exit(ragner::commands::main_with_args(std::env::args_os()));
}
