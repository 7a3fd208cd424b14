fn main() {
    std::process::exit(mdt_augment::cli::run(std::env::args_os()));
}
