fn main() {
    std::process::exit(sprintkin::cli::run(std::env::args_os()));
}
