fn main() {
    std::process::exit(segsynth::cli::main_with_args(std::env::args_os()));
}
