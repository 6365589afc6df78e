fn main() {
    std::process::exit(curvedetect::cli::run());
}
