fn main() {
    std::process::exit(eeg_grouplasso::cli::run(std::env::args_os()));
}
