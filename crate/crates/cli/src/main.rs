fn main() {
    std::process::exit(seqtag_cli::run(std::env::args_os()));
}
